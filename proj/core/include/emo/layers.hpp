#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emo/tensor.hpp"

namespace emo {

class Rng;

enum class LayerKind {
  Conv2D,
  DepthwiseConv,
  PointwiseConv,
  SeparableConv,
  BatchNorm,
  ReLU,
  MaxPool,
  GlobalAvgPool,
  SoftmaxXent,
};

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Linear layers have an exact finite-difference gradient.
bool is_linear(LayerKind kind);

enum class Mode { Train, Infer };

/// Symbolic description of one layer. For pooling layers `kernel`/`stride`
/// describe the window; `in_c == out_c` for every kind except the
/// channel-mixing convolutions.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_c = 1;
  std::size_t out_c = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool bias = false;

  /// Zero-padded "same" convolution: pad = (k - 1) / 2 for odd k.
  static LayerSpec conv2d(std::size_t in_c, std::size_t out_c, std::size_t k,
                          bool bias = false);
  static LayerSpec depthwise(std::size_t channels, std::size_t k,
                             std::size_t stride = 1);
  static LayerSpec pointwise(std::size_t in_c, std::size_t out_c,
                             std::size_t stride = 1, bool bias = false);
  static LayerSpec separable(std::size_t in_c, std::size_t out_c,
                             std::size_t k);
  static LayerSpec batch_norm(std::size_t channels);
  static LayerSpec relu(std::size_t channels);
  static LayerSpec max_pool(std::size_t channels, std::size_t window = 2,
                            std::size_t stride = 2);
  static LayerSpec global_avg_pool(std::size_t channels);
  static LayerSpec softmax(std::size_t classes);

  /// Throws InvalidArgument when fields are inconsistent for the kind.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Learnable tensors plus BatchNorm running statistics.
///
/// `weights` order per kind:
///   Conv2D, PointwiseConv: [W (out,in,k,k)] or [W, bias (1,out,1,1)]
///   DepthwiseConv:         [W (c,1,k,k)]
///   SeparableConv:         [depthwise W (in,1,k,k), pointwise W (out,in,1,1)]
///   BatchNorm:             [gamma (1,c,1,1), beta (1,c,1,1)]
struct LayerParams {
  std::vector<Tensor> weights;
  Tensor running_mean;
  Tensor running_var;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
};

/// Activations a forward pass keeps for backward. Only what the layer's
/// backward reads is stored:
///   convolutions: input (+ mid for SeparableConv)
///   BatchNorm: x_hat, inv_std       ReLU, SoftmaxXent: output
///   MaxPool: argmax                 GlobalAvgPool: shapes only
struct LayerCache {
  bool valid = false;
  Mode mode = Mode::Train;
  Shape4 input_shape;
  Shape4 output_shape;
  Tensor input;
  Tensor output;
  Tensor mid;
  Tensor x_hat;
  std::vector<double> inv_std;
  std::vector<std::size_t> argmax;  // flat input offsets
};

struct GradBundle {
  Tensor d_input;
  std::vector<Tensor> d_params;  // mirrors LayerParams::weights
};

class Layer {
 public:
  /// Allocates parameters for `spec`: convolution weights zero, BatchNorm
  /// gamma = 1, beta = 0, running mean 0 and running variance 1.
  explicit Layer(LayerSpec spec);

  const LayerSpec& spec() const { return spec_; }
  LayerKind kind() const { return spec_.kind; }
  LayerParams& params() { return params_; }
  const LayerParams& params() const { return params_; }

  std::size_t num_learnable() const;
  Shape4 output_shape(const Shape4& input) const;

  /// He-uniform initialization of convolution weights; biases stay zero.
  void init_uniform(Rng& rng);

  /// Train mode uses batch statistics in BatchNorm and updates its running
  /// statistics. When `cache` is non-null it is filled for backward().
  Tensor forward(const Tensor& input, Mode mode, LayerCache* cache = nullptr);

  /// Infer-mode forward; never mutates the layer.
  Tensor infer(const Tensor& input) const;

  /// Exact gradients of this layer's function at the cached point.
  GradBundle backward(const LayerCache& cache, const Tensor& d_output) const;

 private:
  struct BatchStats {
    std::vector<double> mean;
    std::vector<double> var;  // biased
  };
  Tensor compute(const Tensor& input, Mode mode, LayerCache* cache,
                 BatchStats* stats) const;
  void check_input(const Tensor& input) const;

  LayerSpec spec_;
  LayerParams params_;
};

// Softmax cross-entropy helpers used by the trainer. `probs` has shape
// (n, classes, 1, 1); labels are class indices.

/// Mean negative log-likelihood over the batch.
double cross_entropy(const Tensor& probs, std::span<const int> labels);

/// Gradient of the mean cross-entropy with respect to the logits:
/// (p - onehot) / n.
Tensor cross_entropy_logit_grad(const Tensor& probs,
                                std::span<const int> labels);

}  // namespace emo
