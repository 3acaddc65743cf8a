#include "emo/layers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "emo/error.hpp"
#include "emo/kernels.hpp"
#include "emo/rng.hpp"

namespace emo {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 9> kKindNames{{
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::DepthwiseConv, "DepthwiseConv"},
    {LayerKind::PointwiseConv, "PointwiseConv"},
    {LayerKind::SeparableConv, "SeparableConv"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::SoftmaxXent, "SoftmaxXent"},
}};

std::size_t same_pad(std::size_t k) {
  if (k % 2 == 0) throw InvalidArgument("same padding needs an odd kernel");
  return (k - 1) / 2;
}

Shape4 channel_vector(std::size_t c) { return {1, c, 1, 1}; }

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw ParseError("unknown layer kind '" + std::string(name) + "'");
}

bool is_linear(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv:
    case LayerKind::PointwiseConv:
    case LayerKind::SeparableConv:
    case LayerKind::GlobalAvgPool:
      return true;
    default:
      return false;
  }
}

LayerSpec LayerSpec::conv2d(std::size_t in_c, std::size_t out_c,
                            std::size_t k, bool bias) {
  return {LayerKind::Conv2D, in_c, out_c, k, 1, same_pad(k), bias};
}

LayerSpec LayerSpec::depthwise(std::size_t channels, std::size_t k,
                               std::size_t stride) {
  return {LayerKind::DepthwiseConv, channels, channels, k, stride,
          same_pad(k), false};
}

LayerSpec LayerSpec::pointwise(std::size_t in_c, std::size_t out_c,
                               std::size_t stride, bool bias) {
  return {LayerKind::PointwiseConv, in_c, out_c, 1, stride, 0, bias};
}

LayerSpec LayerSpec::separable(std::size_t in_c, std::size_t out_c,
                               std::size_t k) {
  return {LayerKind::SeparableConv, in_c, out_c, k, 1, same_pad(k), false};
}

LayerSpec LayerSpec::batch_norm(std::size_t channels) {
  return {LayerKind::BatchNorm, channels, channels, 1, 1, 0, false};
}

LayerSpec LayerSpec::relu(std::size_t channels) {
  return {LayerKind::ReLU, channels, channels, 1, 1, 0, false};
}

LayerSpec LayerSpec::max_pool(std::size_t channels, std::size_t window,
                              std::size_t stride) {
  return {LayerKind::MaxPool, channels, channels, window, stride, 0, false};
}

LayerSpec LayerSpec::global_avg_pool(std::size_t channels) {
  return {LayerKind::GlobalAvgPool, channels, channels, 1, 1, 0, false};
}

LayerSpec LayerSpec::softmax(std::size_t classes) {
  return {LayerKind::SoftmaxXent, classes, classes, 1, 1, 0, false};
}

void LayerSpec::validate() const {
  const std::string name(to_string(kind));
  if (in_c == 0 || out_c == 0) {
    throw InvalidArgument(name + ": channel counts must be positive");
  }
  if (kernel == 0 || stride == 0) {
    throw InvalidArgument(name + ": kernel and stride must be positive");
  }
  switch (kind) {
    case LayerKind::Conv2D:
      break;
    case LayerKind::PointwiseConv:
      if (kernel != 1 || pad != 0) {
        throw InvalidArgument("PointwiseConv must have kernel 1, pad 0");
      }
      break;
    case LayerKind::SeparableConv:
      if (bias) throw InvalidArgument("SeparableConv carries no bias");
      break;
    default:
      if (in_c != out_c) {
        throw InvalidArgument(name + ": in_c must equal out_c");
      }
      if (bias) throw InvalidArgument(name + ": bias not supported");
      break;
  }
}

Layer::Layer(LayerSpec spec) : spec_(spec) {
  spec_.validate();
  const std::size_t in = spec_.in_c;
  const std::size_t out = spec_.out_c;
  const std::size_t k = spec_.kernel;
  auto& w = params_.weights;
  switch (spec_.kind) {
    case LayerKind::Conv2D:
    case LayerKind::PointwiseConv:
      w.emplace_back(Shape4{out, in, k, k});
      if (spec_.bias) w.emplace_back(channel_vector(out));
      break;
    case LayerKind::DepthwiseConv:
      w.emplace_back(Shape4{in, 1, k, k});
      break;
    case LayerKind::SeparableConv:
      w.emplace_back(Shape4{in, 1, k, k});
      w.emplace_back(Shape4{out, in, 1, 1});
      break;
    case LayerKind::BatchNorm:
      w.push_back(Tensor::filled(channel_vector(in), 1.0));
      w.emplace_back(channel_vector(in));
      params_.running_mean = Tensor(channel_vector(in));
      params_.running_var = Tensor::filled(channel_vector(in), 1.0);
      break;
    default:
      break;
  }
}

std::size_t Layer::num_learnable() const {
  std::size_t total = 0;
  for (const Tensor& t : params_.weights) total += t.size();
  return total;
}

void Layer::check_input(const Tensor& input) const {
  if (input.empty()) {
    throw ShapeError(std::string(to_string(spec_.kind)) + ": empty input");
  }
  if (input.shape().c != spec_.in_c) {
    throw ShapeError(std::string(to_string(spec_.kind)) + ": expected " +
                     std::to_string(spec_.in_c) + " input channels, got " +
                     std::to_string(input.shape().c));
  }
}

Shape4 Layer::output_shape(const Shape4& in) const {
  if (in.c != spec_.in_c) {
    throw ShapeError(std::string(to_string(spec_.kind)) + ": expected " +
                     std::to_string(spec_.in_c) + " input channels, got " +
                     std::to_string(in.c));
  }
  switch (spec_.kind) {
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv:
    case LayerKind::PointwiseConv:
    case LayerKind::SeparableConv:
      return {in.n, spec_.out_c,
              conv_out_extent(in.h, spec_.kernel, spec_.stride, spec_.pad),
              conv_out_extent(in.w, spec_.kernel, spec_.stride, spec_.pad)};
    case LayerKind::MaxPool:
      return {in.n, in.c, conv_out_extent(in.h, spec_.kernel, spec_.stride, 0),
              conv_out_extent(in.w, spec_.kernel, spec_.stride, 0)};
    case LayerKind::GlobalAvgPool:
      return {in.n, in.c, 1, 1};
    case LayerKind::SoftmaxXent:
      if (in.h != 1 || in.w != 1) {
        throw ShapeError("SoftmaxXent expects (n,c,1,1) logits, got " +
                         in.str());
      }
      return in;
    default:
      return in;
  }
}

void Layer::init_uniform(Rng& rng) {
  auto fill = [&](Tensor& t, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  };
  const std::size_t k2 = spec_.kernel * spec_.kernel;
  switch (spec_.kind) {
    case LayerKind::Conv2D:
    case LayerKind::PointwiseConv:
      fill(params_.weights[0], spec_.in_c * k2);
      break;
    case LayerKind::DepthwiseConv:
      fill(params_.weights[0], k2);
      break;
    case LayerKind::SeparableConv:
      fill(params_.weights[0], k2);
      fill(params_.weights[1], spec_.in_c);
      break;
    default:
      break;
  }
}

namespace {

struct BatchNormResult {
  Tensor out;
  Tensor x_hat;
  std::vector<double> inv_std;
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

BatchNormResult batch_norm_forward(const Tensor& x, const LayerParams& p,
                                   Mode mode) {
  const Shape4& s = x.shape();
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n * plane);
  BatchNormResult r{Tensor(s), Tensor(s), std::vector<double>(s.c),
                    std::vector<double>(s.c, 0.0), std::vector<double>(s.c, 0.0)};
  const Tensor& gamma = p.weights[0];
  const Tensor& beta = p.weights[1];
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* v = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += v[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* v = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = v[i] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      r.mean[c] = mean;
      r.var[c] = var;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const double inv = 1.0 / std::sqrt(var + p.bn_eps);
    r.inv_std[c] = inv;
    for (std::size_t n = 0; n < s.n; ++n) {
      const double* v = x.sample(n) + c * plane;
      double* xh = r.x_hat.sample(n) + c * plane;
      double* o = r.out.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (v[i] - mean) * inv;
        o[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  }
  return r;
}

Tensor max_pool_forward(const Tensor& x, std::size_t window,
                        std::size_t stride, std::vector<std::size_t>* argmax) {
  const Shape4& s = x.shape();
  const std::size_t oh = conv_out_extent(s.h, window, stride, 0);
  const std::size_t ow = conv_out_extent(s.w, window, stride, 0);
  Tensor out({s.n, s.c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t idx = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t xo = 0; xo < ow; ++xo, ++idx) {
          // First maximal element in row-major window order wins ties.
          std::size_t best = x.offset(n, c, y * stride, xo * stride);
          double best_v = x[best];
          for (std::size_t ky = 0; ky < window; ++ky) {
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t off =
                  x.offset(n, c, y * stride + ky, xo * stride + kx);
              if (x[off] > best_v) {
                best_v = x[off];
                best = off;
              }
            }
          }
          out[idx] = best_v;
          if (argmax) (*argmax)[idx] = best;
        }
      }
    }
  }
  return out;
}

Tensor softmax_forward(const Tensor& x) {
  const Shape4& s = x.shape();
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* z = x.sample(n);
    double* p = out.sample(n);
    const double m = *std::max_element(z, z + s.c);
    double sum = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) {
      p[c] = std::exp(z[c] - m);
      sum += p[c];
    }
    for (std::size_t c = 0; c < s.c; ++c) p[c] /= sum;
  }
  return out;
}

}  // namespace

Tensor Layer::forward(const Tensor& input, Mode mode, LayerCache* cache) {
  BatchStats stats;
  Tensor out = compute(input, mode, cache, &stats);
  if (spec_.kind == LayerKind::BatchNorm && mode == Mode::Train) {
    const double m = params_.bn_momentum;
    const double count =
        static_cast<double>(input.shape().n * input.shape().plane());
    for (std::size_t c = 0; c < spec_.in_c; ++c) {
      params_.running_mean[c] =
          m * params_.running_mean[c] + (1.0 - m) * stats.mean[c];
      params_.running_var[c] = m * params_.running_var[c] +
                               (1.0 - m) * stats.var[c] * count / (count - 1.0);
    }
  }
  return out;
}

Tensor Layer::infer(const Tensor& input) const {
  return compute(input, Mode::Infer, nullptr, nullptr);
}

Tensor Layer::compute(const Tensor& input, Mode mode, LayerCache* cache,
                      BatchStats* stats) const {
  check_input(input);
  output_shape(input.shape());
  const LayerKind kind = spec_.kind;
  if (cache) {
    *cache = LayerCache{};
    cache->valid = true;
    cache->mode = mode;
    cache->input_shape = input.shape();
    if (kind == LayerKind::Conv2D || kind == LayerKind::PointwiseConv ||
        kind == LayerKind::DepthwiseConv || kind == LayerKind::SeparableConv) {
      cache->input = input;
    }
  }
  const auto& w = params_.weights;
  Tensor out;
  switch (spec_.kind) {
    case LayerKind::Conv2D:
    case LayerKind::PointwiseConv:
      out = kernels::conv2d_forward(input, w[0], spec_.bias ? &w[1] : nullptr,
                                    spec_.stride, spec_.pad);
      break;
    case LayerKind::DepthwiseConv:
      out = kernels::depthwise_forward(input, w[0], spec_.stride, spec_.pad);
      break;
    case LayerKind::SeparableConv: {
      Tensor mid =
          kernels::depthwise_forward(input, w[0], spec_.stride, spec_.pad);
      out = kernels::conv2d_forward(mid, w[1], nullptr, 1, 0);
      if (cache) cache->mid = std::move(mid);
      break;
    }
    case LayerKind::BatchNorm: {
      if (mode == Mode::Train && input.shape().n < 2) {
        throw InvalidArgument(
            "BatchNorm in train mode needs a batch of at least 2 samples");
      }
      BatchNormResult r = batch_norm_forward(input, params_, mode);
      if (stats) {
        stats->mean = std::move(r.mean);
        stats->var = std::move(r.var);
      }
      if (cache) {
        cache->x_hat = std::move(r.x_hat);
        cache->inv_std = std::move(r.inv_std);
      }
      out = std::move(r.out);
      break;
    }
    case LayerKind::ReLU: {
      out = input;
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    }
    case LayerKind::MaxPool:
      out = max_pool_forward(input, spec_.kernel, spec_.stride,
                             cache ? &cache->argmax : nullptr);
      break;
    case LayerKind::GlobalAvgPool: {
      const Shape4& s = input.shape();
      out = Tensor({s.n, s.c, 1, 1});
      const double inv = 1.0 / static_cast<double>(s.plane());
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const double* v = input.sample(n) + c * s.plane();
          double sum = 0.0;
          for (std::size_t i = 0; i < s.plane(); ++i) sum += v[i];
          out.at(n, c, 0, 0) = sum * inv;
        }
      }
      break;
    }
    case LayerKind::SoftmaxXent:
      out = softmax_forward(input);
      break;
  }
  if (cache) {
    cache->output_shape = out.shape();
    if (kind == LayerKind::ReLU || kind == LayerKind::SoftmaxXent) {
      cache->output = out;
    }
  }
  return out;
}

GradBundle Layer::backward(const LayerCache& cache,
                           const Tensor& d_output) const {
  if (!cache.valid) {
    throw InvalidArgument(std::string(to_string(spec_.kind)) +
                          ": backward called without a forward cache");
  }
  if (d_output.shape() != cache.output_shape) {
    throw ShapeError(std::string(to_string(spec_.kind)) +
                     ": d_output shape " + d_output.shape().str() +
                     " != forward output " + cache.output_shape.str());
  }
  const Tensor& x = cache.input;
  const Shape4& in_shape = cache.input_shape;
  const auto& w = params_.weights;
  GradBundle g;
  switch (spec_.kind) {
    case LayerKind::Conv2D:
    case LayerKind::PointwiseConv: {
      auto r = kernels::conv2d_backward(x, w[0], d_output, spec_.stride,
                                        spec_.pad, spec_.bias);
      g.d_input = std::move(r.d_input);
      g.d_params.push_back(std::move(r.d_weights));
      if (spec_.bias) g.d_params.push_back(std::move(r.d_bias));
      break;
    }
    case LayerKind::DepthwiseConv: {
      auto r = kernels::depthwise_backward(x, w[0], d_output, spec_.stride,
                                           spec_.pad);
      g.d_input = std::move(r.d_input);
      g.d_params.push_back(std::move(r.d_weights));
      break;
    }
    case LayerKind::SeparableConv: {
      auto pw = kernels::conv2d_backward(cache.mid, w[1], d_output, 1, 0,
                                         false);
      auto dw = kernels::depthwise_backward(x, w[0], pw.d_input, spec_.stride,
                                            spec_.pad);
      g.d_input = std::move(dw.d_input);
      g.d_params.push_back(std::move(dw.d_weights));
      g.d_params.push_back(std::move(pw.d_weights));
      break;
    }
    case LayerKind::BatchNorm: {
      const Shape4& s = in_shape;
      const std::size_t plane = s.plane();
      const double count = static_cast<double>(s.n * plane);
      const Tensor& gamma = w[0];
      g.d_input = Tensor(s);
      Tensor d_gamma(gamma.shape());
      Tensor d_beta(gamma.shape());
      for (std::size_t c = 0; c < s.c; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
          const double* dy = d_output.sample(n) + c * plane;
          const double* xh = cache.x_hat.sample(n) + c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xh[i];
          }
        }
        d_gamma[c] = sum_dy_xhat;
        d_beta[c] = sum_dy;
        const double scale = gamma[c] * cache.inv_std[c];
        for (std::size_t n = 0; n < s.n; ++n) {
          const double* dy = d_output.sample(n) + c * plane;
          const double* xh = cache.x_hat.sample(n) + c * plane;
          double* dx = g.d_input.sample(n) + c * plane;
          if (cache.mode == Mode::Train) {
            for (std::size_t i = 0; i < plane; ++i) {
              dx[i] = scale * (dy[i] - sum_dy / count -
                               xh[i] * sum_dy_xhat / count);
            }
          } else {
            for (std::size_t i = 0; i < plane; ++i) dx[i] = scale * dy[i];
          }
        }
      }
      g.d_params.push_back(std::move(d_gamma));
      g.d_params.push_back(std::move(d_beta));
      break;
    }
    case LayerKind::ReLU: {
      // y > 0 exactly where x > 0.
      g.d_input = d_output;
      const Tensor& y = cache.output;
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(y[i] > 0.0)) g.d_input[i] = 0.0;
      }
      break;
    }
    case LayerKind::MaxPool: {
      g.d_input = Tensor(in_shape);
      for (std::size_t i = 0; i < d_output.size(); ++i) {
        g.d_input[cache.argmax[i]] += d_output[i];
      }
      break;
    }
    case LayerKind::GlobalAvgPool: {
      const Shape4& s = in_shape;
      g.d_input = Tensor(s);
      const double inv = 1.0 / static_cast<double>(s.plane());
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const double v = d_output.at(n, c, 0, 0) * inv;
          double* dx = g.d_input.sample(n) + c * s.plane();
          std::fill(dx, dx + s.plane(), v);
        }
      }
      break;
    }
    case LayerKind::SoftmaxXent: {
      const Shape4& s = in_shape;
      g.d_input = Tensor(s);
      for (std::size_t n = 0; n < s.n; ++n) {
        const double* p = cache.output.sample(n);
        const double* dp = d_output.sample(n);
        double dot = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) dot += p[c] * dp[c];
        double* dz = g.d_input.sample(n);
        for (std::size_t c = 0; c < s.c; ++c) dz[c] = p[c] * (dp[c] - dot);
      }
      break;
    }
  }
  return g;
}

namespace {

void check_labels(const Tensor& probs, std::span<const int> labels) {
  const Shape4& s = probs.shape();
  if (labels.size() != s.n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(s.n));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= s.c) {
      throw InvalidArgument("cross_entropy: label " + std::to_string(l) +
                            " out of range");
    }
  }
}

}  // namespace

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  double loss = 0.0;
  constexpr double kFloor = std::numeric_limits<double>::min();
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const double p = probs.at(n, static_cast<std::size_t>(labels[n]), 0, 0);
    loss -= std::log(std::max(p, kFloor));
  }
  return loss / static_cast<double>(labels.size());
}

Tensor cross_entropy_logit_grad(const Tensor& probs,
                                std::span<const int> labels) {
  check_labels(probs, labels);
  Tensor g = probs;
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    g.at(n, static_cast<std::size_t>(labels[n]), 0, 0) -= 1.0;
  }
  for (double& v : g.data()) v *= inv;
  return g;
}

}  // namespace emo
