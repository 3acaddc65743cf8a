#include "emo/training.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "emo/error.hpp"
#include "emo/rng.hpp"

namespace emo {

std::string_view to_string(Optimizer opt) {
  return opt == Optimizer::Sgd ? "sgd" : "momentum";
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "momentum") return Optimizer::Momentum;
  throw InvalidArgument("unknown optimizer '" + std::string(name) +
                        "' (expected sgd or momentum)");
}

void TrainConfig::validate() const {
  if (batch_size < 2) {
    throw InvalidArgument("batch_size must be >= 2 (BatchNorm needs a batch)");
  }
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw InvalidArgument("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("momentum must be in [0, 1)");
  }
  if (stop_at_accuracy && !(*stop_at_accuracy > 0.0 && *stop_at_accuracy <= 1.0)) {
    throw InvalidArgument("stop_at_accuracy must be in (0, 1]");
  }
}

void TrainHistory::write_csv(std::ostream& out) const {
  const auto prec = out.precision();
  out << "# optimizer=" << to_string(config.optimizer)
      << " lr=" << config.learning_rate << " momentum=" << config.momentum
      << " batch_size=" << config.batch_size << " seed=" << config.seed
      << '\n';
  out << "epoch,loss,train_acc\n";
  out << std::setprecision(10);
  for (const EpochRecord& r : epochs) {
    out << r.epoch << ',' << r.loss << ',' << r.train_acc << '\n';
  }
  out.precision(prec);
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    if (end - i == 1 && !batches.empty()) {
      batches.back().push_back(order[i]);
    } else {
      batches.emplace_back(order.begin() + static_cast<long>(i),
                           order.begin() + static_cast<long>(end));
    }
  }
  return batches;
}

}  // namespace

TrainHistory train(ModelGraph& graph, const Dataset& data,
                   const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (data.size() < 2) {
    throw InvalidArgument("training needs at least 2 samples");
  }
  TrainHistory history{config, {}};
  Rng rng(config.seed);

  std::vector<Tensor*> params = graph.parameters();
  std::vector<Tensor> velocity;
  if (config.optimizer == Optimizer::Momentum) {
    for (const Tensor* p : params) velocity.emplace_back(p->shape());
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      const Tensor x = stack_images(data, batch);
      labels.clear();
      for (std::size_t i : batch) labels.push_back(code(data.samples[i].label));

      ModelTape tape;
      const Tensor probs = graph.forward(x, Mode::Train, &tape);
      const double loss = cross_entropy(probs, labels);
      if (!std::isfinite(loss)) {
        throw DivergenceError(
            "non-finite loss in epoch " + std::to_string(epoch), epoch);
      }
      loss_sum += loss * static_cast<double>(batch.size());
      for (std::size_t n = 0; n < batch.size(); ++n) {
        if (code(argmax_label(probs, n)) == labels[n]) ++correct;
      }

      const ModelGradients grads = graph.backward_from_logits(
          tape, cross_entropy_logit_grad(probs, labels));
      const double lr = config.learning_rate;
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto w = params[p]->data();
        auto g = grads.d_params[p].data();
        if (config.optimizer == Optimizer::Momentum) {
          auto v = velocity[p].data();
          for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = config.momentum * v[i] + g[i];
            w[i] -= lr * v[i];
          }
        } else {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
      }
    }
    const double n = static_cast<double>(data.size());
    EpochRecord rec{epoch, loss_sum / n, static_cast<double>(correct) / n};
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.stop_at_accuracy && rec.train_acc >= *config.stop_at_accuracy) {
      break;
    }
  }
  return history;
}

bool EvalResult::consistent() const {
  std::size_t sum = 0;
  std::size_t trace = 0;
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < kNumEmotions; ++j) row += confusion[i][j];
    if (row != class_counts[i]) return false;
    sum += row;
    trace += confusion[i][i];
  }
  if (sum != total || trace != correct) return false;
  const double expected =
      total == 0 ? 0.0
                 : static_cast<double>(correct) / static_cast<double>(total);
  return accuracy == expected;
}

Emotion argmax_label(const Tensor& probs, std::size_t n) {
  const std::size_t classes = probs.shape().c;
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (probs.at(n, c, 0, 0) > probs.at(n, best, 0, 0)) best = c;
  }
  return static_cast<Emotion>(best);
}

EvalResult tally(std::span<const Emotion> truth,
                 std::span<const Emotion> predicted) {
  if (truth.size() != predicted.size()) {
    throw InvalidArgument("tally: label lists differ in length");
  }
  if (truth.empty()) throw InvalidArgument("tally: nothing to evaluate");
  EvalResult r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(code(truth[i]));
    const auto p = static_cast<std::size_t>(code(predicted[i]));
    ++r.confusion[t][p];
    ++r.class_counts[t];
    if (t == p) ++r.correct;
  }
  r.total = truth.size();
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

std::vector<Emotion> predict(const ModelGraph& graph, const Dataset& data,
                             std::size_t batch_size) {
  std::vector<Emotion> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = graph.infer(stack_images(data, idx));
    for (std::size_t n = 0; n < idx.size(); ++n) {
      out.push_back(argmax_label(probs, n));
    }
  }
  return out;
}

EvalResult evaluate(const ModelGraph& graph, const Dataset& data,
                    std::size_t batch_size) {
  if (data.empty()) throw InvalidArgument("evaluate: empty dataset");
  const std::vector<Emotion> predicted = predict(graph, data, batch_size);
  std::vector<Emotion> truth;
  truth.reserve(data.size());
  for (const Sample& s : data.samples) truth.push_back(s.label);
  return tally(truth, predicted);
}

void print_eval(std::ostream& out, const EvalResult& r) {
  const auto prec = out.precision();
  out << "samples: " << r.total << '\n';
  out << "accuracy: " << std::fixed << std::setprecision(4) << r.accuracy
      << '\n';
  out.unsetf(std::ios::fixed);
  out.precision(prec);
  out << "confusion (rows = true, cols = predicted):\n";
  out << std::setw(10) << "";
  for (Emotion e : kAllEmotions) out << std::setw(9) << name(e);
  out << '\n';
  for (Emotion t : kAllEmotions) {
    out << std::setw(10) << name(t);
    for (Emotion p : kAllEmotions) {
      out << std::setw(9)
          << r.confusion[static_cast<std::size_t>(code(t))]
                        [static_cast<std::size_t>(code(p))];
    }
    out << '\n';
  }
}

void retain_large_allocations() {
#if defined(__GLIBC__)
  constexpr int kLimit = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kLimit);
  mallopt(M_TRIM_THRESHOLD, kLimit);
#endif
}

}  // namespace emo
