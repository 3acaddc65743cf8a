#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emo/account.hpp"
#include "emo/layers.hpp"

namespace emo {

/// A main path of layers, optionally summed with a residual branch that
/// starts from the block input.
struct Block {
  std::string name;
  std::vector<Layer> main;
  std::optional<Layer> residual;
};

/// Per-layer caches of one train-mode forward pass.
struct ModelTape {
  std::vector<std::vector<LayerCache>> main;
  std::vector<std::optional<LayerCache>> residual;
  Tensor output;
};

struct ModelGradients {
  Tensor d_input;
  std::vector<Tensor> d_params;  // same order as ModelGraph::parameters()
};

/// Ordered executable composition of blocks ending in a SoftmaxXent layer.
class ModelGraph {
 public:
  /// Throws InvalidArgument when consecutive channel counts do not chain,
  /// a residual branch changes channels differently from its main path, or
  /// the final layer is not SoftmaxXent.
  ModelGraph(std::string name, std::vector<Block> blocks);

  const std::string& name() const { return name_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }

  std::size_t input_channels() const;
  std::size_t num_classes() const;

  /// Train mode updates BatchNorm running statistics. A non-null `tape`
  /// receives the caches needed by backward().
  Tensor forward(const Tensor& input, Mode mode, ModelTape* tape = nullptr);
  Tensor infer(const Tensor& input) const;

  /// Backpropagates a gradient with respect to the output probabilities.
  ModelGradients backward(const ModelTape& tape, const Tensor& d_probs) const;

  /// Backpropagates a gradient with respect to the pre-softmax logits,
  /// skipping the softmax Jacobian (used with cross_entropy_logit_grad).
  ModelGradients backward_from_logits(const ModelTape& tape,
                                      const Tensor& d_logits) const;

  /// Learnable tensors in manifest order: blocks in order, main layers then
  /// the residual layer, each layer's LayerParams::weights in order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t num_parameters() const;

  /// Output shape after every block for the given input shape. Throws
  /// ShapeError if a residual merge does not line up.
  std::vector<Shape4> trace_shapes(const Shape4& input) const;

  /// Every parameter-carrying layer as an accounting entry, with `m` set to
  /// the layer's output side length for an input of `input` shape.
  std::vector<LayerAccountEntry> export_account(const Shape4& input) const;

  /// Free-form build metadata (seed, options); persisted with the weights.
  std::map<std::string, std::string> metadata;

 private:
  ModelGradients backward_impl(const ModelTape& tape, Tensor d_out,
                               bool skip_softmax) const;

  std::string name_;
  std::vector<Block> blocks_;
};

enum class ModelId { Proposed, Vanilla };

std::string_view to_string(ModelId id);
/// Throws InvalidArgument for anything but "proposed" / "vanilla".
ModelId parse_model_id(std::string_view name);

struct ProposedOptions {
  std::uint64_t seed = 42;
  std::size_t input_channels = 1;
  /// Kernel of the final convolution before global average pooling.
  std::size_t head_kernel = 5;
  /// Use kernels 3, 5, 7, 9 in blocks 1..4 instead of 3 everywhere.
  bool growing_kernels = false;
};

/// Pointwise stem (1 -> 32) followed by four separable blocks with
/// 64, 128, 256 and 7 output channels, each with a strided pointwise
/// residual, then a "same" convolution head, global average pooling and
/// softmax.
ModelGraph build_proposed(const ProposedOptions& options = {});

struct VanillaOptions {
  std::uint64_t seed = 42;
  std::size_t input_channels = 1;
  std::size_t kernel = 5;
};

/// Twelve "same" k x k convolutions with BatchNorm and ReLU (channels
/// 1 -> 16 -> 16 -> 32 -> ... -> 32), max pooling after every third, then a
/// pointwise projection to 7 channels, global average pooling and softmax.
ModelGraph build_vanilla(const VanillaOptions& options = {});

ModelGraph build_model(ModelId id, std::uint64_t seed);

/// Term lists of the published complexity sums: 10 entries for the
/// proposed network, the 12 printed 5x5 terms for the vanilla baseline.
std::vector<LayerAccountEntry> reference_account_list(ModelId id);

/// Binary weight file: see serialize.cpp for the byte layout.
void save_weights(const ModelGraph& graph, std::ostream& out);
void save_weights(const ModelGraph& graph, const std::string& path);
ModelGraph load_weights(std::istream& in);
ModelGraph load_weights(const std::string& path);

}  // namespace emo
