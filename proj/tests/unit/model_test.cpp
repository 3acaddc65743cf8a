#include <gtest/gtest.h>

#include "emo/error.hpp"
#include "emo/model.hpp"
#include "oracles.hpp"

namespace emo {
namespace {

TEST(Proposed, ShapesThroughTheBlocks) {
  const ModelGraph g = build_proposed();
  const auto shapes = g.trace_shapes({1, 1, 48, 48});
  ASSERT_EQ(shapes.size(), g.blocks().size());
  EXPECT_EQ(shapes.front(), (Shape4{1, 32, 48, 48}));
  EXPECT_EQ(shapes[1], (Shape4{1, 64, 24, 24}));
  EXPECT_EQ(shapes[2], (Shape4{1, 128, 12, 12}));
  EXPECT_EQ(shapes[3], (Shape4{1, 256, 6, 6}));
  EXPECT_EQ(shapes[4], (Shape4{1, 7, 3, 3}));
  EXPECT_EQ(shapes.back(), (Shape4{1, 7, 1, 1}));
  EXPECT_EQ(g.num_classes(), 7u);
  EXPECT_EQ(g.input_channels(), 1u);
}

TEST(Proposed, ParameterCountIsFrozen) {
  EXPECT_EQ(build_proposed().num_parameters(), 187228u);
  EXPECT_EQ(build_vanilla().num_parameters(), 250935u);
}

TEST(Vanilla, TwelveConvolutionsWithFiveByFiveKernels) {
  const ModelGraph g = build_vanilla();
  std::size_t convs = 0;
  for (const auto& b : g.blocks())
    for (const auto& l : b.main)
      if (l.kind() == LayerKind::Conv2D) {
        ++convs;
        EXPECT_EQ(l.spec().kernel, 5u);
      }
  EXPECT_EQ(convs, 12u);
  EXPECT_EQ(g.trace_shapes({1, 1, 48, 48}).back(), (Shape4{1, 7, 1, 1}));
}

TEST(Model, OutputsAreDistributions) {
  Rng rng(1);
  for (ModelId id : {ModelId::Proposed, ModelId::Vanilla}) {
    const ModelGraph g = build_model(id, 5);
    const Tensor y = g.infer(testing::random_tensor({3, 1, 48, 48}, rng, 0.0, 1.0));
    ASSERT_EQ(y.shape(), (Shape4{3, 7, 1, 1}));
    for (std::size_t n = 0; n < 3; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += y.at(n, c, 0, 0);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Model, SeedDeterminesWeights) {
  const auto a = build_proposed({.seed = 7});
  const auto b = build_proposed({.seed = 7});
  const auto c = build_proposed({.seed = 8});
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_same = all_same && (*pa[i] == *pb[i]);
    any_diff = any_diff || !(*pa[i] == *pc[i]);
  }
  EXPECT_TRUE(all_same);
  EXPECT_TRUE(any_diff);
}

TEST(Model, InferIsBatchIndependent) {
  Rng rng(2);
  const ModelGraph g = build_proposed();
  const Tensor x = testing::random_tensor({2, 1, 48, 48}, rng, 0.0, 1.0);
  const Tensor both = g.infer(x);
  const Tensor one = g.infer(Tensor({1, 1, 48, 48},
                                    std::vector<double>(x.sample(1), x.sample(1) + 48 * 48)));
  for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(both.at(1, c, 0, 0), one.at(0, c, 0, 0));
}

TEST(Model, RejectsBrokenChannelChains) {
  std::vector<Block> blocks;
  blocks.push_back({"a", {Layer(LayerSpec::pointwise(1, 4))}, std::nullopt});
  blocks.push_back({"b", {Layer(LayerSpec::pointwise(5, 7)), Layer(LayerSpec::global_avg_pool(7)),
                          Layer(LayerSpec::softmax(7))},
                    std::nullopt});
  EXPECT_THROW(ModelGraph("bad", std::move(blocks)), InvalidArgument);
}

TEST(Model, RequiresSoftmaxAtTheEnd) {
  std::vector<Block> blocks;
  blocks.push_back({"a", {Layer(LayerSpec::pointwise(1, 7))}, std::nullopt});
  EXPECT_THROW(ModelGraph("bad", std::move(blocks)), InvalidArgument);
}

TEST(Model, TooSmallInputIsAShapeError) {
  EXPECT_THROW(build_proposed().trace_shapes({1, 1, 8, 8}), ShapeError);
}

TEST(Model, AccountExportCoversEveryParameter) {
  const ModelGraph g = build_proposed();
  const auto entries = g.export_account({1, 1, 48, 48});
  // 1 stem + 4 blocks x (2 separable + 1 residual) + 1 head conv, plus BN.
  std::size_t convs = 0;
  for (const auto& e : entries) convs += is_convolutional(e.kind);
  EXPECT_EQ(convs, 14u);
}

TEST(ModelId, ParseRoundTrip) {
  EXPECT_EQ(parse_model_id("proposed"), ModelId::Proposed);
  EXPECT_EQ(parse_model_id(to_string(ModelId::Vanilla)), ModelId::Vanilla);
  EXPECT_THROW(parse_model_id("alexnet"), InvalidArgument);
}

}  // namespace
}  // namespace emo
