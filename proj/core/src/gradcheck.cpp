#include "emo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "emo/error.hpp"
#include "emo/rng.hpp"

namespace emo {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

namespace {

class LossFn {
 public:
  LossFn(const GradCheckOptions& opt, const Shape4& out_shape)
      : opt_(opt), weights_(out_shape.numel(), 1.0) {
    if (opt.loss == CheckLoss::Projection) {
      Rng rng(opt.seed);
      for (double& w : weights_) w = rng.uniform(-1.0, 1.0);
    }
  }

  double value(const Tensor& y) const {
    double loss;
    if (opt_.loss == CheckLoss::CrossEntropy) {
      loss = cross_entropy(y, opt_.labels);
    } else {
      // Neumaier summation; the difference of two nearby losses is what
      // gets measured, so accumulation error goes straight into the estimate.
      double sum = 0.0, comp = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double term = weights_[i] * y[i];
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
      }
      loss = sum + comp;
    }
    if (!std::isfinite(loss)) throw Error("gradient_check: non-finite loss");
    return loss;
  }

  Tensor gradient(const Tensor& y) const {
    Tensor g(y.shape());
    if (opt_.loss == CheckLoss::CrossEntropy) {
      const double inv = 1.0 / static_cast<double>(opt_.labels.size());
      for (std::size_t n = 0; n < opt_.labels.size(); ++n) {
        const auto c = static_cast<std::size_t>(opt_.labels[n]);
        g.at(n, c, 0, 0) = -inv / y.at(n, c, 0, 0);
      }
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) g[i] = weights_[i];
    }
    return g;
  }

 private:
  const GradCheckOptions& opt_;
  std::vector<double> weights_;
};

}  // namespace

GradCheckResult gradient_check(const Layer& layer, const Tensor& input,
                               const GradCheckOptions& options) {
  const double eps = options.epsilon;
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw InvalidArgument("gradient_check: epsilon must be in [1e-7, 1e-3]");
  }
  if (options.loss == CheckLoss::CrossEntropy &&
      layer.kind() != LayerKind::SoftmaxXent) {
    throw InvalidArgument("gradient_check: cross-entropy needs SoftmaxXent");
  }

  auto evaluate = [&](const Layer& l, const Tensor& x) {
    Layer copy = l;
    return copy.forward(x, Mode::Train);
  };

  Layer base = layer;
  LayerCache cache;
  const Tensor y = base.forward(input, Mode::Train, &cache);
  const LossFn loss(options, y.shape());
  loss.value(y);
  const GradBundle grads = layer.backward(cache, loss.gradient(y));

  GradCheckResult result;
  auto numeric = [&](const Layer& l, const Tensor& x) {
    return loss.value(evaluate(l, x));
  };

  Tensor x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = numeric(layer, x);
    x[i] = orig - eps;
    const double down = numeric(layer, x);
    x[i] = orig;
    const double err = relative_error((up - down) / (2.0 * eps),
                                      grads.d_input[i]);
    result.max_input_error = std::max(result.max_input_error, err);
    ++result.checked;
  }

  Layer probe = layer;
  auto& weights = probe.params().weights;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    for (std::size_t i = 0; i < weights[t].size(); ++i) {
      const double orig = weights[t][i];
      weights[t][i] = orig + eps;
      const double up = numeric(probe, input);
      weights[t][i] = orig - eps;
      const double down = numeric(probe, input);
      weights[t][i] = orig;
      const double err = relative_error((up - down) / (2.0 * eps),
                                        grads.d_params[t][i]);
      result.max_param_error = std::max(result.max_param_error, err);
      ++result.checked;
    }
  }
  result.max_relative_error =
      std::max(result.max_input_error, result.max_param_error);
  return result;
}

namespace {

std::vector<std::size_t> pick(std::size_t size, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (k == 0 || k >= size) return idx;
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult gradient_check(const ModelGraph& graph, const Tensor& input,
                               const ModelCheckOptions& options) {
  const double eps = options.epsilon;
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw InvalidArgument("gradient_check: epsilon must be in [1e-7, 1e-3]");
  }
  if (options.labels.size() != input.shape().n) {
    throw InvalidArgument("gradient_check: need one label per sample");
  }

  auto loss_of = [&](const ModelGraph& g, const Tensor& x) {
    ModelGraph copy = g;
    const double l = cross_entropy(copy.forward(x, Mode::Train), options.labels);
    if (!std::isfinite(l)) throw Error("gradient_check: non-finite loss");
    return l;
  };

  ModelGraph base = graph;
  ModelTape tape;
  const Tensor probs = base.forward(input, Mode::Train, &tape);
  const ModelGradients grads = base.backward_from_logits(
      tape, cross_entropy_logit_grad(probs, options.labels));

  GradCheckResult result;
  Rng rng(options.seed);
  auto record = [&](double& slot, double numeric, double analytic) {
    const double err = relative_error(numeric, analytic);
    slot = std::max(slot, err);
    if (std::max(std::abs(numeric), std::abs(analytic)) >= options.resolution) {
      result.max_resolved_error = std::max(result.max_resolved_error, err);
    } else {
      ++result.unresolved;
    }
    ++result.checked;
  };

  Tensor x = input;
  for (std::size_t i : pick(x.size(), options.coords_per_tensor, rng)) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = loss_of(graph, x);
    x[i] = orig - eps;
    const double down = loss_of(graph, x);
    x[i] = orig;
    record(result.max_input_error, (up - down) / (2.0 * eps), grads.d_input[i]);
  }

  ModelGraph probe = graph;
  const auto params = probe.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& w = *params[t];
    for (std::size_t i : pick(w.size(), options.coords_per_tensor, rng)) {
      const double orig = w[i];
      w[i] = orig + eps;
      const double up = loss_of(probe, input);
      w[i] = orig - eps;
      const double down = loss_of(probe, input);
      w[i] = orig;
      record(result.max_param_error, (up - down) / (2.0 * eps), grads.d_params[t][i]);
    }
  }
  result.max_relative_error =
      std::max(result.max_input_error, result.max_param_error);
  return result;
}

}  // namespace emo
