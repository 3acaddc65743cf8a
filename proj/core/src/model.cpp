#include "emo/model.hpp"

#include <array>

#include "emo/emotion.hpp"
#include "emo/error.hpp"
#include "emo/rng.hpp"

namespace emo {
namespace {

std::size_t out_channels(const Block& b) {
  return b.main.back().spec().out_c;
}

void init_all(ModelGraph& g, std::uint64_t seed) {
  Rng rng(seed);
  for (Block& b : g.blocks()) {
    for (Layer& l : b.main) l.init_uniform(rng);
    if (b.residual) b.residual->init_uniform(rng);
  }
}

}  // namespace

ModelGraph::ModelGraph(std::string name, std::vector<Block> blocks)
    : name_(std::move(name)), blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw InvalidArgument("model has no blocks");
  std::size_t channels = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    if (b.main.empty()) {
      throw InvalidArgument("block '" + b.name + "' has an empty main path");
    }
    const std::size_t in = b.main.front().spec().in_c;
    if (i > 0 && in != channels) {
      throw InvalidArgument("block '" + b.name + "' expects " +
                            std::to_string(in) + " channels, previous block "
                            "produces " + std::to_string(channels));
    }
    for (std::size_t j = 1; j < b.main.size(); ++j) {
      if (b.main[j].spec().in_c != b.main[j - 1].spec().out_c) {
        throw InvalidArgument("block '" + b.name + "': layer " +
                              std::to_string(j) + " channel mismatch");
      }
    }
    if (b.residual && (b.residual->spec().in_c != in ||
                       b.residual->spec().out_c != out_channels(b))) {
      throw InvalidArgument("block '" + b.name +
                            "': residual channels do not match main path");
    }
    channels = out_channels(b);
  }
  if (blocks_.back().main.back().kind() != LayerKind::SoftmaxXent) {
    throw InvalidArgument("model must end in SoftmaxXent");
  }
}

std::size_t ModelGraph::input_channels() const {
  return blocks_.front().main.front().spec().in_c;
}

std::size_t ModelGraph::num_classes() const {
  return blocks_.back().main.back().spec().out_c;
}

Tensor ModelGraph::forward(const Tensor& input, Mode mode, ModelTape* tape) {
  if (tape) {
    tape->main.assign(blocks_.size(), {});
    tape->residual.assign(blocks_.size(), std::nullopt);
  }
  Tensor x = input;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    if (tape) tape->main[i].resize(b.main.size());
    Tensor y = b.main[0].forward(x, mode, tape ? &tape->main[i][0] : nullptr);
    for (std::size_t j = 1; j < b.main.size(); ++j) {
      y = b.main[j].forward(y, mode, tape ? &tape->main[i][j] : nullptr);
    }
    if (b.residual) {
      LayerCache* rc = nullptr;
      if (tape) rc = &tape->residual[i].emplace();
      y = add(std::move(y), b.residual->forward(x, mode, rc));
    }
    x = std::move(y);
  }
  if (tape) tape->output = x;
  return x;
}

Tensor ModelGraph::infer(const Tensor& input) const {
  Tensor x = input;
  for (const Block& b : blocks_) {
    Tensor y = b.main[0].infer(x);
    for (std::size_t j = 1; j < b.main.size(); ++j) y = b.main[j].infer(y);
    if (b.residual) y = add(std::move(y), b.residual->infer(x));
    x = std::move(y);
  }
  return x;
}

ModelGradients ModelGraph::backward(const ModelTape& tape,
                                    const Tensor& d_probs) const {
  return backward_impl(tape, d_probs, false);
}

ModelGradients ModelGraph::backward_from_logits(const ModelTape& tape,
                                                const Tensor& d_logits) const {
  return backward_impl(tape, d_logits, true);
}

ModelGradients ModelGraph::backward_impl(const ModelTape& tape, Tensor d_out,
                                         bool skip_softmax) const {
  if (tape.main.size() != blocks_.size()) {
    throw InvalidArgument("backward: tape does not belong to this model");
  }
  // Gradients are gathered per layer, then flattened in manifest order.
  std::vector<std::vector<std::vector<Tensor>>> main_grads(blocks_.size());
  std::vector<std::vector<Tensor>> res_grads(blocks_.size());

  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const Block& b = blocks_[bi];
    main_grads[bi].resize(b.main.size());
    Tensor d_block_out = d_out;
    Tensor d = d_out;
    for (std::size_t j = b.main.size(); j-- > 0;) {
      const Layer& l = b.main[j];
      if (skip_softmax && bi + 1 == blocks_.size() && j + 1 == b.main.size()) {
        continue;  // d already holds the gradient w.r.t. the logits
      }
      GradBundle g = l.backward(tape.main[bi][j], d);
      d = std::move(g.d_input);
      main_grads[bi][j] = std::move(g.d_params);
    }
    if (b.residual) {
      GradBundle g = b.residual->backward(*tape.residual[bi], d_block_out);
      d = add(std::move(d), g.d_input);
      res_grads[bi] = std::move(g.d_params);
    }
    d_out = std::move(d);
  }

  ModelGradients out;
  out.d_input = std::move(d_out);
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    for (auto& layer : main_grads[bi]) {
      for (Tensor& t : layer) out.d_params.push_back(std::move(t));
    }
    for (Tensor& t : res_grads[bi]) out.d_params.push_back(std::move(t));
  }
  return out;
}

std::vector<Tensor*> ModelGraph::parameters() {
  std::vector<Tensor*> out;
  for (Block& b : blocks_) {
    for (Layer& l : b.main) {
      for (Tensor& t : l.params().weights) out.push_back(&t);
    }
    if (b.residual) {
      for (Tensor& t : b.residual->params().weights) out.push_back(&t);
    }
  }
  return out;
}

std::vector<const Tensor*> ModelGraph::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<ModelGraph*>(this)->parameters()) {
    out.push_back(t);
  }
  return out;
}

std::size_t ModelGraph::num_parameters() const {
  std::size_t total = 0;
  for (const Tensor* t : parameters()) total += t->size();
  return total;
}

std::vector<Shape4> ModelGraph::trace_shapes(const Shape4& input) const {
  std::vector<Shape4> out;
  Shape4 s = input;
  for (const Block& b : blocks_) {
    Shape4 y = s;
    for (const Layer& l : b.main) y = l.output_shape(y);
    if (b.residual) {
      const Shape4 r = b.residual->output_shape(s);
      if (r != y) {
        throw ShapeError("block '" + b.name + "': residual output " + r.str() +
                         " != main output " + y.str());
      }
    }
    out.push_back(y);
    s = y;
  }
  return out;
}

std::vector<LayerAccountEntry> ModelGraph::export_account(
    const Shape4& input) const {
  std::vector<LayerAccountEntry> out;
  auto emit = [&](const Layer& l, const Shape4& in_shape,
                  const std::string& label) {
    const LayerSpec& s = l.spec();
    const Shape4 o = l.output_shape(in_shape);
    LayerAccountEntry e{s.in_c, s.kernel, s.out_c, AccountKind::Standard,
                        s.bias, o.h, label};
    switch (s.kind) {
      case LayerKind::Conv2D:
        e.kind = AccountKind::Standard;
        break;
      case LayerKind::PointwiseConv:
        e.kind = AccountKind::Pointwise;
        break;
      case LayerKind::DepthwiseConv:
        e.kind = AccountKind::Depthwise;
        break;
      case LayerKind::SeparableConv:
        e.kind = AccountKind::Separable;
        break;
      case LayerKind::BatchNorm:
        e.kind = AccountKind::BatchNorm;
        e.s = 1;
        break;
      default:
        return;
    }
    out.push_back(std::move(e));
  };

  Shape4 s = input;
  for (const Block& b : blocks_) {
    Shape4 y = s;
    for (std::size_t j = 0; j < b.main.size(); ++j) {
      emit(b.main[j], y, b.name + "." + std::to_string(j));
      y = b.main[j].output_shape(y);
    }
    if (b.residual) emit(*b.residual, s, b.name + ".residual");
    s = y;
  }
  return out;
}

std::string_view to_string(ModelId id) {
  return id == ModelId::Proposed ? "proposed" : "vanilla";
}

ModelId parse_model_id(std::string_view name) {
  if (name == "proposed") return ModelId::Proposed;
  if (name == "vanilla") return ModelId::Vanilla;
  throw InvalidArgument("unknown model '" + std::string(name) +
                        "' (expected proposed or vanilla)");
}

ModelGraph build_proposed(const ProposedOptions& opt) {
  constexpr std::size_t kStem = 32;
  constexpr std::array<std::size_t, 4> kWidths{64, 128, 256, kNumEmotions};
  constexpr std::array<std::size_t, 4> kGrowing{3, 5, 7, 9};

  std::vector<Block> blocks;
  {
    Block stem{"stem", {}, std::nullopt};
    stem.main.emplace_back(LayerSpec::pointwise(opt.input_channels, kStem));
    stem.main.emplace_back(LayerSpec::batch_norm(kStem));
    stem.main.emplace_back(LayerSpec::relu(kStem));
    blocks.push_back(std::move(stem));
  }
  std::size_t in = kStem;
  for (std::size_t i = 0; i < kWidths.size(); ++i) {
    const std::size_t out = kWidths[i];
    const std::size_t k = opt.growing_kernels ? kGrowing[i] : 3;
    Block b{"block" + std::to_string(i + 1), {}, std::nullopt};
    b.main.emplace_back(LayerSpec::separable(in, out, k));
    b.main.emplace_back(LayerSpec::batch_norm(out));
    b.main.emplace_back(LayerSpec::relu(out));
    b.main.emplace_back(LayerSpec::separable(out, out, k));
    b.main.emplace_back(LayerSpec::batch_norm(out));
    b.main.emplace_back(LayerSpec::max_pool(out, 2, 2));
    b.residual.emplace(LayerSpec::pointwise(in, out, 2));
    blocks.push_back(std::move(b));
    in = out;
  }
  {
    Block head{"head", {}, std::nullopt};
    head.main.emplace_back(
        LayerSpec::conv2d(kNumEmotions, kNumEmotions, opt.head_kernel, true));
    head.main.emplace_back(LayerSpec::global_avg_pool(kNumEmotions));
    head.main.emplace_back(LayerSpec::softmax(kNumEmotions));
    blocks.push_back(std::move(head));
  }
  ModelGraph g("proposed", std::move(blocks));
  init_all(g, opt.seed);
  g.metadata["seed"] = std::to_string(opt.seed);
  g.metadata["head_kernel"] = std::to_string(opt.head_kernel);
  g.metadata["growing_kernels"] = opt.growing_kernels ? "1" : "0";
  return g;
}

ModelGraph build_vanilla(const VanillaOptions& opt) {
  constexpr std::size_t kLayers = 12;
  std::vector<Block> blocks;
  std::size_t in = opt.input_channels;
  for (std::size_t i = 0; i < kLayers; ++i) {
    const std::size_t out = i < 2 ? 16 : 32;
    Block b{"conv" + std::to_string(i + 1), {}, std::nullopt};
    b.main.emplace_back(LayerSpec::conv2d(in, out, opt.kernel));
    b.main.emplace_back(LayerSpec::batch_norm(out));
    b.main.emplace_back(LayerSpec::relu(out));
    if ((i + 1) % 3 == 0) b.main.emplace_back(LayerSpec::max_pool(out, 2, 2));
    blocks.push_back(std::move(b));
    in = out;
  }
  Block head{"head", {}, std::nullopt};
  head.main.emplace_back(LayerSpec::pointwise(in, kNumEmotions, 1, true));
  head.main.emplace_back(LayerSpec::global_avg_pool(kNumEmotions));
  head.main.emplace_back(LayerSpec::softmax(kNumEmotions));
  blocks.push_back(std::move(head));

  ModelGraph g("vanilla", std::move(blocks));
  init_all(g, opt.seed);
  g.metadata["seed"] = std::to_string(opt.seed);
  g.metadata["kernel"] = std::to_string(opt.kernel);
  return g;
}

ModelGraph build_model(ModelId id, std::uint64_t seed) {
  if (id == ModelId::Proposed) {
    ProposedOptions o;
    o.seed = seed;
    return build_proposed(o);
  }
  VanillaOptions o;
  o.seed = seed;
  return build_vanilla(o);
}

std::vector<LayerAccountEntry> reference_account_list(ModelId id) {
  using K = AccountKind;
  if (id == ModelId::Proposed) {
    return {
        {32, 1, 32, K::Pointwise, false, 0, "stem"},
        {32, 1, 64, K::Pointwise, false, 0, "pointwise1"},
        {64, 1, 128, K::Pointwise, false, 0, "pointwise2"},
        {128, 1, 256, K::Pointwise, false, 0, "pointwise3"},
        {256, 1, 7, K::Pointwise, false, 0, "pointwise4"},
        {32, 3, 64, K::Separable, false, 0, "separable1"},
        {64, 3, 128, K::Separable, false, 0, "separable2"},
        {128, 3, 256, K::Separable, false, 0, "separable3"},
        {256, 3, 7, K::Separable, false, 0, "separable4"},
        {7, 5, 7, K::Standard, false, 0, "head"},
    };
  }
  std::vector<LayerAccountEntry> list;
  list.push_back({16, 5, 16, K::Standard, false, 0, "conv1"});
  for (int i = 2; i <= 12; ++i) {
    list.push_back({16, 5, 32, K::Standard, false, 0,
                    "conv" + std::to_string(i)});
  }
  return list;
}

}  // namespace emo
