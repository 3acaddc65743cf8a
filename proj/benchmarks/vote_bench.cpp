#include <benchmark/benchmark.h>

#include <vector>

#include "emo/realtime.hpp"
#include "emo/rng.hpp"

namespace {

void BM_MajorityVote(benchmark::State& state) {
  emo::Rng rng(4);
  std::vector<emo::Emotion> window(emo::kDefaultWindow);
  for (auto& e : window) e = static_cast<emo::Emotion>(rng.uniform() * 7.0);
  for (auto _ : state) benchmark::DoNotOptimize(emo::majority_vote(window));
}

}  // namespace

BENCHMARK(BM_MajorityVote);
