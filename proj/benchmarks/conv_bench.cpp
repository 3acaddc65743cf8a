#include <benchmark/benchmark.h>

#include "emo/kernels.hpp"
#include "emo/rng.hpp"
#include "emo/tensor.hpp"

namespace {

emo::Tensor filled(const emo::Shape4& s, std::uint64_t seed) {
  emo::Rng rng(seed);
  emo::Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// args: channels in, channels out, spatial size
void BM_ConvReference(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto o = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const emo::Tensor x = filled({1, c, hw, hw}, 1);
  const emo::Tensor w = filled({o, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emo::conv2d_reference(x, w, 1, 1));
}

void BM_ConvFast(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto o = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const emo::Tensor x = filled({1, c, hw, hw}, 1);
  const emo::Tensor w = filled({o, c, 3, 3}, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(emo::kernels::conv2d_forward(x, w, nullptr, 1, 1));
}

void BM_Depthwise(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const emo::Tensor x = filled({1, c, hw, hw}, 1);
  const emo::Tensor w = filled({c, 1, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emo::kernels::depthwise_forward(x, w, 1, 1));
}

void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({1, 8, 46})->Args({16, 32, 22})->Args({64, 128, 6})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_ConvReference)->Apply(conv_shapes);
BENCHMARK(BM_ConvFast)->Apply(conv_shapes);
BENCHMARK(BM_Depthwise)->Apply(conv_shapes);
