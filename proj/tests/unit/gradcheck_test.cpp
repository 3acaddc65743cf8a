#include <gtest/gtest.h>

#include "emo/error.hpp"
#include "emo/gradcheck.hpp"
#include "emo/model.hpp"
#include "oracles.hpp"

namespace emo {
namespace {

TEST(RelativeError, FloorsTheDenominator) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-12), 1e-12 / 1e-8);
}

TEST(GradientCheck, RejectsEpsilonOutsideRange) {
  Layer relu(LayerSpec::relu(1));
  const Tensor x = Tensor::filled({2, 1, 2, 2}, 0.5);
  GradCheckOptions opt;
  opt.epsilon = 1e-2;
  EXPECT_THROW(gradient_check(relu, x, opt), InvalidArgument);
  opt.epsilon = 1e-9;
  EXPECT_THROW(gradient_check(relu, x, opt), InvalidArgument);
}

TEST(GradientCheck, DetectsAWrongGradient) {
  // A ReLU evaluated exactly at its kink: the one-sided analytic gradient
  // disagrees with the symmetric difference.
  Layer relu(LayerSpec::relu(1));
  const Tensor x = Tensor::filled({2, 1, 1, 1}, 0.0);
  GradCheckOptions opt;
  opt.loss = CheckLoss::Sum;
  EXPECT_GT(gradient_check(relu, x, opt).max_relative_error, 0.1);
}

TEST(GradientCheck, CountsEveryCoordinate) {
  Rng rng(2);
  Layer conv(LayerSpec::conv2d(2, 3, 3, true));
  conv.init_uniform(rng);
  const Tensor x = testing::random_tensor({2, 2, 4, 4}, rng);
  const auto r = gradient_check(conv, x);
  EXPECT_EQ(r.checked, x.size() + conv.num_learnable());
}

TEST(GradientCheck, FullProposedModelSampled) {
  Rng rng(9);
  const ModelGraph g = build_proposed({.seed = 3});
  ModelCheckOptions opt;
  opt.labels = {3, 5};
  opt.coords_per_tensor = 4;
  const Tensor x = testing::random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
  const auto r = gradient_check(g, x, opt);
  EXPECT_GT(r.checked, 100u);
  // Coordinates with tiny gradients (the stem weights feed a train-mode
  // BatchNorm and are nearly scale-invariant) are limited by roundoff, so
  // only resolvable ones are held to the tolerance here.
  EXPECT_LE(r.max_resolved_error, 1e-6)
      << "input " << r.max_input_error << ", params " << r.max_param_error;
  EXPECT_LT(r.unresolved, r.checked / 4);
}

TEST(GradientCheck, ModelNeedsOneLabelPerSample) {
  const ModelGraph g = build_proposed();
  ModelCheckOptions opt;
  opt.labels = {1};
  EXPECT_THROW(gradient_check(g, Tensor({2, 1, 16, 16}), opt), InvalidArgument);
}

}  // namespace
}  // namespace emo
