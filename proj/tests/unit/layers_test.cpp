#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "emo/error.hpp"
#include "emo/gradcheck.hpp"
#include "emo/layers.hpp"
#include "oracles.hpp"

namespace emo {
namespace {

using testing::random_tensor;

// Values bounded away from zero so ReLU and max-pool stay differentiable
// at the check point.
Tensor away_from_kinks(const Shape4& s, Rng& rng) {
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(0.1, 1.0) + 1e-3 * static_cast<double>(i % 97);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

struct KindCase {
  const char* name;
  LayerSpec spec;
  Shape4 input;
};

class LayerGradient : public ::testing::TestWithParam<KindCase> {};

TEST_P(LayerGradient, CentralDifferencesAgree) {
  const KindCase& c = GetParam();
  Rng rng(101);
  Layer layer(c.spec);
  layer.init_uniform(rng);
  // Non-trivial BatchNorm affine parameters and conv biases.
  for (auto& w : layer.params().weights)
    if (w.shape().n == 1 && w.shape().h == 1 && w.shape().w == 1)
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += rng.uniform(-0.5, 0.5);

  const Tensor x = away_from_kinks(c.input, rng);
  GradCheckOptions opt;
  if (c.spec.kind == LayerKind::SoftmaxXent) {
    opt.loss = CheckLoss::CrossEntropy;
    for (std::size_t n = 0; n < c.input.n; ++n) opt.labels.push_back(static_cast<int>(n % c.input.c));
  }
  const GradCheckResult r = gradient_check(layer, x, opt);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LE(r.max_relative_error, 1e-6)
      << c.name << ": input " << r.max_input_error << ", params " << r.max_param_error;

  // Linear maps: central differences are exact apart from roundoff, which
  // scales like 1/epsilon, so tightness is checked with the largest step.
  if (is_linear(c.spec.kind)) {
    opt.epsilon = 1e-3;
    const GradCheckResult wide = gradient_check(layer, x, opt);
    EXPECT_LE(wide.max_relative_error, 1e-8)
        << c.name << ": input " << wide.max_input_error << ", params " << wide.max_param_error;
  }
}

INSTANTIATE_TEST_SUITE_P(
    EveryKind, LayerGradient,
    ::testing::Values(
        KindCase{"Conv2D", LayerSpec::conv2d(2, 3, 3, true), {2, 2, 5, 5}},
        KindCase{"Conv2DK5", LayerSpec::conv2d(2, 2, 5), {1, 2, 6, 6}},
        KindCase{"DepthwiseConv", LayerSpec::depthwise(3, 3, 2), {2, 3, 6, 5}},
        KindCase{"PointwiseConv", LayerSpec::pointwise(3, 4, 2, true), {2, 3, 5, 5}},
        KindCase{"SeparableConv", LayerSpec::separable(3, 4, 3), {2, 3, 5, 5}},
        KindCase{"BatchNorm", LayerSpec::batch_norm(3), {4, 3, 3, 3}},
        KindCase{"ReLU", LayerSpec::relu(2), {2, 2, 4, 4}},
        KindCase{"MaxPool", LayerSpec::max_pool(2), {2, 2, 5, 6}},
        KindCase{"GlobalAvgPool", LayerSpec::global_avg_pool(3), {2, 3, 4, 5}},
        KindCase{"SoftmaxXent", LayerSpec::softmax(7), {3, 7, 1, 1}}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(LayerSpec, ValidateRejectsInconsistentFields) {
  LayerSpec s = LayerSpec::relu(3);
  s.out_c = 4;
  EXPECT_THROW(s.validate(), InvalidArgument);
  EXPECT_THROW(Layer(LayerSpec::conv2d(0, 3, 3)), InvalidArgument);
  EXPECT_THROW(Layer(LayerSpec::conv2d(3, 3, 4)), InvalidArgument);
}

TEST(Layer, RejectsWrongInputChannels) {
  Layer l(LayerSpec::pointwise(3, 2));
  EXPECT_THROW(l.infer(Tensor({1, 2, 4, 4})), ShapeError);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  Rng rng(8);
  Layer bn(LayerSpec::batch_norm(2));
  const Tensor x = random_tensor({4, 2, 3, 3}, rng, -3.0, 5.0);
  const Tensor y = bn.forward(x, Mode::Train);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) {
        const double v = y[(n * 2 + c) * 9 + i];
        mean += v;
        sq += v * v;
      }
    mean /= 36.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / 36.0 - mean * mean, 1.0, 1e-3);
  }
}

TEST(BatchNorm, RunningStatisticsUseMomentumAndUnbiasedVariance) {
  Layer bn(LayerSpec::batch_norm(1));
  const Tensor x({2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});  // mean 4, unbiased var 20/3
  bn.forward(x, Mode::Train);
  EXPECT_NEAR(bn.params().running_mean[0], 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(bn.params().running_var[0], 0.9 + 0.1 * 20.0 / 3.0, 1e-15);
}

TEST(BatchNorm, InferUsesRunningStatisticsAndDoesNotMutate) {
  Layer bn(LayerSpec::batch_norm(1));
  bn.params().running_mean[0] = 2.0;
  bn.params().running_var[0] = 4.0;
  const Tensor y = bn.infer(Tensor({1, 1, 1, 1}, {6.0}));
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(bn.params().running_mean[0], 2.0);
}

TEST(BatchNorm, TrainModeNeedsTwoSamples) {
  Layer bn(LayerSpec::batch_norm(1));
  EXPECT_THROW(bn.forward(Tensor({1, 1, 2, 2}), Mode::Train), InvalidArgument);
  EXPECT_NO_THROW(bn.forward(Tensor({1, 1, 2, 2}), Mode::Infer));
}

TEST(MaxPool, TiesGoToFirstMaximumInRowMajorOrder) {
  Layer pool(LayerSpec::max_pool(1));
  const Tensor x({1, 1, 2, 2}, {5.0, 5.0, 5.0, 1.0});
  LayerCache cache;
  const Tensor y = pool.forward(x, Mode::Train, &cache);
  EXPECT_EQ(y[0], 5.0);
  const GradBundle g = pool.backward(cache, Tensor({1, 1, 1, 1}, {1.0}));
  EXPECT_EQ(g.d_input[0], 1.0);
  EXPECT_EQ(g.d_input[1], 0.0);
  EXPECT_EQ(g.d_input[2], 0.0);
}

TEST(MaxPool, OddExtentsAreFloored) {
  Layer pool(LayerSpec::max_pool(1));
  EXPECT_EQ(pool.output_shape({1, 1, 5, 7}), (Shape4{1, 1, 2, 3}));
  EXPECT_THROW(pool.output_shape({1, 1, 1, 4}), ShapeError);
}

TEST(GlobalAvgPool, AveragesEachPlane) {
  Layer gap(LayerSpec::global_avg_pool(2));
  const Tensor x({1, 2, 1, 3}, {1, 2, 3, 10, 20, 30});
  const Tensor y = gap.infer(x);
  EXPECT_EQ(y.shape(), (Shape4{1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 20.0);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
  Layer sm(LayerSpec::softmax(3));
  const Tensor y = sm.infer(Tensor({2, 3, 1, 1}, {1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0}));
  ASSERT_TRUE(y.all_finite());
  for (std::size_t n = 0; n < 2; ++n)
    EXPECT_NEAR(y.at(n, 0, 0, 0) + y.at(n, 1, 0, 0) + y.at(n, 2, 0, 0), 1.0, 1e-15);
  EXPECT_GT(y.at(0, 1, 0, 0), y.at(0, 0, 0, 0));
  EXPECT_THROW(sm.infer(Tensor({1, 3, 2, 1})), ShapeError);
}

TEST(CrossEntropy, FusedLogitGradientMatchesSoftmaxChain) {
  Rng rng(4);
  Layer sm(LayerSpec::softmax(7));
  const Tensor logits = random_tensor({3, 7, 1, 1}, rng, -2.0, 2.0);
  const std::vector<int> labels{0, 6, 3};
  LayerCache cache;
  const Tensor p = sm.forward(logits, Mode::Train, &cache);
  Tensor d_p(p.shape());
  for (std::size_t n = 0; n < 3; ++n) {
    const auto c = static_cast<std::size_t>(labels[n]);
    d_p.at(n, c, 0, 0) = -1.0 / (3.0 * p.at(n, c, 0, 0));
  }
  const Tensor chained = sm.backward(cache, d_p).d_input;
  const Tensor fused = cross_entropy_logit_grad(p, labels);
  EXPECT_LE(max_abs_diff(chained, fused), 1e-14);
  double expected = 0.0;
  for (std::size_t n = 0; n < 3; ++n)
    expected -= std::log(p.at(n, static_cast<std::size_t>(labels[n]), 0, 0));
  EXPECT_NEAR(cross_entropy(p, labels), expected / 3.0, 1e-14);
}

TEST(CrossEntropy, RejectsBadLabels) {
  const Tensor p = Tensor::filled({2, 7, 1, 1}, 1.0 / 7.0);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{0}), ShapeError);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{0, 7}), InvalidArgument);
}

TEST(InitUniform, HeBoundAndZeroBias) {
  Rng rng(1);
  Layer conv(LayerSpec::conv2d(4, 8, 3, true));
  conv.init_uniform(rng);
  const double bound = std::sqrt(6.0 / (4.0 * 9.0));
  const Tensor& w = conv.params().weights[0];
  double max_abs = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) max_abs = std::max(max_abs, std::abs(w[i]));
  EXPECT_LE(max_abs, bound);
  EXPECT_GT(max_abs, 0.5 * bound);
  const Tensor& b = conv.params().weights[1];
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i], 0.0);
}

TEST(LayerKind, NamesRoundTrip) {
  for (LayerKind k : {LayerKind::Conv2D, LayerKind::DepthwiseConv, LayerKind::PointwiseConv,
                      LayerKind::SeparableConv, LayerKind::BatchNorm, LayerKind::ReLU,
                      LayerKind::MaxPool, LayerKind::GlobalAvgPool, LayerKind::SoftmaxXent}) {
    EXPECT_EQ(parse_layer_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_layer_kind("Dense"), ParseError);
}

}  // namespace
}  // namespace emo
