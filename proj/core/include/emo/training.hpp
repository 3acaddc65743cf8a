#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "emo/dataset.hpp"
#include "emo/emotion.hpp"
#include "emo/model.hpp"

namespace emo {

enum class Optimizer { Sgd, Momentum };

std::string_view to_string(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  std::uint64_t seed = 1;
  int epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Momentum;
  double momentum = 0.9;
  /// End early once an epoch's running training accuracy reaches this.
  std::optional<double> stop_at_accuracy;

  /// batch_size >= 2 (BatchNorm), epochs >= 1, learning_rate finite and
  /// >= 0, momentum in [0, 1). Throws InvalidArgument naming the field.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;       // mean cross-entropy over the epoch's samples
  double train_acc = 0.0;  // train-mode predictions during the epoch
};

struct TrainHistory {
  TrainConfig config;
  std::vector<EpochRecord> epochs;

  /// `epoch,loss,train_acc` CSV preceded by `#` metadata lines.
  void write_csv(std::ostream& out) const;
};

/// Mini-batch training with softmax cross-entropy. Each epoch visits the
/// samples in a seeded shuffled order; a trailing single-sample batch is
/// merged into the previous batch. Throws DivergenceError (carrying the
/// 1-based epoch) when the loss stops being finite.
TrainHistory train(ModelGraph& graph, const Dataset& data,
                   const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch = {});

using ConfusionMatrix =
    std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions>;

struct EvalResult {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  /// Rows are true labels, columns predictions.
  ConfusionMatrix confusion{};
  std::array<std::size_t, kNumEmotions> class_counts{};

  /// Row sums equal class counts, entries sum to total, trace equals
  /// correct and accuracy equals correct / total.
  bool consistent() const;
};

/// Label of the largest probability in row `n`; ties go to the lower code.
Emotion argmax_label(const Tensor& probs, std::size_t n);

/// Confusion matrix of paired labels. Throws InvalidArgument when the
/// spans differ in length or are empty.
EvalResult tally(std::span<const Emotion> truth,
                 std::span<const Emotion> predicted);

/// Infer-mode predictions for every sample, in dataset order.
std::vector<Emotion> predict(const ModelGraph& graph, const Dataset& data,
                             std::size_t batch_size = 64);

/// Throws InvalidArgument on an empty dataset.
EvalResult evaluate(const ModelGraph& graph, const Dataset& data,
                    std::size_t batch_size = 64);

void print_eval(std::ostream& out, const EvalResult& result);

/// Raises glibc's mmap threshold so multi-megabyte activation buffers are
/// recycled from the heap instead of being mapped and faulted in on every
/// batch. Process-wide; a no-op on other C libraries.
void retain_large_allocations();

}  // namespace emo
