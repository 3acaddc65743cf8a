#include <gtest/gtest.h>

#include <sstream>
#include <utility>

#include "emo/error.hpp"
#include "emo/training.hpp"
#include "oracles.hpp"

namespace emo {
namespace {

std::vector<Emotion> random_labels(std::size_t n, Rng& rng) {
  std::vector<Emotion> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(kAllEmotions[rng.below(kNumEmotions)]);
  return v;
}

TEST(Tally, ConfusionContractOnRandomPredictions) {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    const auto truth = random_labels(n, rng);
    auto pred = random_labels(n, rng);
    // Bias some trials towards correct predictions.
    for (std::size_t i = 0; i < n; ++i)
      if (rng.uniform() < 0.3 * (trial % 3)) pred[i] = truth[i];
    const EvalResult r = tally(truth, pred);
    ASSERT_TRUE(r.consistent());
    std::size_t trace = 0;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      std::size_t row = 0;
      for (std::size_t j = 0; j < kNumEmotions; ++j) row += r.confusion[k][j];
      EXPECT_EQ(row, r.class_counts[k]);
      trace += r.confusion[k][k];
    }
    EXPECT_EQ(trace, r.correct);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / static_cast<double>(n));
  }
}

TEST(Tally, RejectsMismatchedOrEmptyInput) {
  const std::vector<Emotion> a{Emotion::Sad}, none;
  EXPECT_THROW(tally(a, none), InvalidArgument);
  EXPECT_THROW(tally(none, none), InvalidArgument);
}

TEST(EvalResult, ConsistencyCheckCatchesCorruption) {
  const std::vector<Emotion> t{Emotion::Sad, Emotion::Happy}, p{Emotion::Sad, Emotion::Fear};
  EvalResult r = tally(t, p);
  EXPECT_TRUE(r.consistent());
  r.correct = 2;
  EXPECT_FALSE(r.consistent());
}

TEST(ArgmaxLabel, TiesGoToLowerCode) {
  Tensor p({2, 7, 1, 1});
  p.at(0, 2, 0, 0) = 0.4;
  p.at(0, 5, 0, 0) = 0.4;
  p.at(1, 6, 0, 0) = 0.9;
  EXPECT_EQ(argmax_label(p, 0), Emotion::Fear);
  EXPECT_EQ(argmax_label(p, 1), Emotion::Neutral);
}

TEST(Evaluate, EmptyDatasetIsAnError) {
  EXPECT_THROW(evaluate(build_proposed(), Dataset{}), InvalidArgument);
}

TEST(Evaluate, ReportIsConsistent) {
  const Dataset d = synth_dataset(2, 4);
  const EvalResult r = evaluate(build_proposed(), d);
  EXPECT_EQ(r.total, 14u);
  EXPECT_TRUE(r.consistent());
  std::ostringstream out;
  print_eval(out, r);
  EXPECT_NE(out.str().find("accuracy:"), std::string::npos);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.learning_rate = -0.1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Optimizer, NamesRoundTrip) {
  EXPECT_EQ(parse_optimizer(to_string(Optimizer::Sgd)), Optimizer::Sgd);
  EXPECT_EQ(parse_optimizer("momentum"), Optimizer::Momentum);
  EXPECT_THROW(parse_optimizer("adam"), InvalidArgument);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 5;
  c.learning_rate = 0.01;
  c.seed = 3;
  return c;
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  ModelGraph g = build_proposed({.seed = 1});
  const ModelGraph before = g;
  TrainConfig c = tiny_config();
  c.learning_rate = 0.0;
  c.epochs = 1;
  train(g, synth_dataset(2, 1), c);
  const auto a = before.parameters();
  const auto b = std::as_const(g).parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(*a[i] == *b[i]);
}

TEST(Train, SameSeedSameWeights) {
  const Dataset d = synth_dataset(2, 1);
  ModelGraph g1 = build_proposed({.seed = 1});
  ModelGraph g2 = build_proposed({.seed = 1});
  const TrainHistory h1 = train(g1, d, tiny_config());
  const TrainHistory h2 = train(g2, d, tiny_config());
  ASSERT_EQ(h1.epochs.size(), 2u);
  EXPECT_EQ(h1.epochs[1].loss, h2.epochs[1].loss);
  const auto a = g1.parameters(), b = g2.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(*a[i] == *b[i]);
}

TEST(Train, LossDecreasesOnASmallSet) {
  const Dataset d = synth_dataset(4, 2);
  ModelGraph g = build_proposed({.seed = 2});
  TrainConfig c = tiny_config();
  c.epochs = 4;
  c.batch_size = 7;
  c.learning_rate = 0.003;  // batches of 7 with momentum overshoot at 0.01
  const TrainHistory h = train(g, d, c);
  EXPECT_LT(h.epochs.back().loss, h.epochs.front().loss);
}

TEST(Train, StopsEarlyAtTargetAccuracy) {
  ModelGraph g = build_proposed({.seed = 2});
  const ModelGraph fresh = g;
  const Dataset d = synth_dataset(3, 2);
  TrainConfig c = tiny_config();
  c.epochs = 1;
  const double first = train(g, d, c).epochs[0].train_acc;
  ASSERT_GT(first, 0.0);
  // Same start, same seed: the first epoch reaches `first` again and stops.
  g = fresh;
  c.epochs = 5;
  c.stop_at_accuracy = first;
  EXPECT_EQ(train(g, d, c).epochs.size(), 1u);
}

TEST(Train, DivergenceNamesTheEpoch) {
  ModelGraph g = build_proposed({.seed = 2});
  TrainConfig c = tiny_config();
  c.learning_rate = 1e300;
  try {
    train(g, synth_dataset(2, 2), c);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}

TEST(Train, EmptyDatasetIsAnError) {
  ModelGraph g = build_proposed();
  EXPECT_THROW(train(g, Dataset{}, tiny_config()), InvalidArgument);
}

TEST(TrainHistory, CsvLayout) {
  TrainHistory h;
  h.epochs.push_back({1, 1.5, 0.25});
  h.epochs.push_back({2, 0.75, 0.5});
  std::ostringstream out;
  h.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> data;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') data.push_back(line);
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data[0], "epoch,loss,train_acc");
  EXPECT_EQ(data[1].substr(0, 2), "1,");
}

}  // namespace
}  // namespace emo
