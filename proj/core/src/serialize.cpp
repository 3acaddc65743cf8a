// Weight file layout (version 1), all integers and floats little-endian:
//
//   offset 0   8 bytes   magic "EMOCNNWT"
//   offset 8   u32       format version (1)
//   offset 12  u64       manifest length L in bytes
//   offset 20  L bytes   ASCII manifest, one record per line:
//                          model <name>
//                          meta <key> <value>
//                          block <name> <main_layer_count> <has_residual>
//                          layer <kind> <in_c> <out_c> <k> <stride> <pad>
//                                <bias> <bn_eps> <bn_momentum>
//                          tensor <n> <c> <h> <w>
//                          end
//                        Each block line is followed by its main layers and
//                        then its residual layer. Each layer line is
//                        followed by one tensor line per LayerParams weight
//                        and, for BatchNorm, running mean then running var.
//   then                 IEEE-754 binary64 values of every tensor, in
//                        manifest order, each tensor row-major (n,c,h,w).
//
// bn_eps / bn_momentum are written with 17 significant digits so they
// round-trip exactly.
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "emo/error.hpp"
#include "emo/model.hpp"

namespace emo {
namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'C', 'N', 'N', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw ParseError("weight file truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(bytes[i]) << (8 * i);
  }
  return value;
}

std::vector<const Tensor*> layer_tensors(const Layer& l) {
  std::vector<const Tensor*> out;
  for (const Tensor& t : l.params().weights) out.push_back(&t);
  if (l.kind() == LayerKind::BatchNorm) {
    out.push_back(&l.params().running_mean);
    out.push_back(&l.params().running_var);
  }
  return out;
}

std::vector<Tensor*> layer_tensors(Layer& l) {
  std::vector<Tensor*> out;
  for (Tensor& t : l.params().weights) out.push_back(&t);
  if (l.kind() == LayerKind::BatchNorm) {
    out.push_back(&l.params().running_mean);
    out.push_back(&l.params().running_var);
  }
  return out;
}

void write_layer(std::ostream& m, const Layer& l) {
  const LayerSpec& s = l.spec();
  m << "layer " << to_string(s.kind) << ' ' << s.in_c << ' ' << s.out_c << ' '
    << s.kernel << ' ' << s.stride << ' ' << s.pad << ' ' << (s.bias ? 1 : 0)
    << ' ' << std::setprecision(17) << l.params().bn_eps << ' '
    << l.params().bn_momentum << '\n';
  for (const Tensor* t : layer_tensors(l)) {
    const Shape4& sh = t->shape();
    m << "tensor " << sh.n << ' ' << sh.c << ' ' << sh.h << ' ' << sh.w
      << '\n';
  }
}

class ManifestReader {
 public:
  explicit ManifestReader(const std::string& text) : in_(text) {}

  std::istringstream next(const std::string& expected) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag != expected) {
        throw ParseError("manifest: expected '" + expected + "', got '" + tag +
                         "'", line_no_);
      }
      return ls;
    }
    throw ParseError("manifest: missing '" + expected + "'", line_no_);
  }

  std::string peek_tag() {
    const auto pos = in_.tellg();
    const std::size_t saved = line_no_;
    std::string line;
    std::string tag;
    while (std::getline(in_, line)) {
      if (line.empty()) continue;
      std::istringstream(line) >> tag;
      break;
    }
    in_.clear();
    in_.seekg(pos);
    line_no_ = saved;
    return tag;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istringstream in_;
  std::size_t line_no_ = 0;
};

Layer read_layer(ManifestReader& r) {
  auto ls = r.next("layer");
  std::string kind;
  LayerSpec s;
  int bias = 0;
  double eps = 0, momentum = 0;
  ls >> kind >> s.in_c >> s.out_c >> s.kernel >> s.stride >> s.pad >> bias >>
      eps >> momentum;
  if (!ls) throw ParseError("manifest: malformed layer record", r.line());
  s.kind = parse_layer_kind(kind);
  s.bias = bias != 0;
  Layer layer(s);
  layer.params().bn_eps = eps;
  layer.params().bn_momentum = momentum;
  for (Tensor* t : layer_tensors(layer)) {
    auto ts = r.next("tensor");
    Shape4 sh;
    ts >> sh.n >> sh.c >> sh.h >> sh.w;
    if (!ts || sh != t->shape()) {
      throw ParseError("manifest: tensor shape " + sh.str() +
                       " does not match layer " + kind, r.line());
    }
  }
  return layer;
}

}  // namespace

void save_weights(const ModelGraph& graph, std::ostream& out) {
  std::ostringstream m;
  m << "model " << graph.name() << '\n';
  for (const auto& [k, v] : graph.metadata) m << "meta " << k << ' ' << v << '\n';
  for (const Block& b : graph.blocks()) {
    m << "block " << b.name << ' ' << b.main.size() << ' '
      << (b.residual ? 1 : 0) << '\n';
    for (const Layer& l : b.main) write_layer(m, l);
    if (b.residual) write_layer(m, *b.residual);
  }
  m << "end\n";
  const std::string manifest = m.str();

  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint64_t>(out, manifest.size());
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  auto emit = [&](const Layer& l) {
    for (const Tensor* t : layer_tensors(l)) {
      for (double v : t->data()) write_le(out, std::bit_cast<std::uint64_t>(v));
    }
  };
  for (const Block& b : graph.blocks()) {
    for (const Layer& l : b.main) emit(l);
    if (b.residual) emit(*b.residual);
  }
  if (!out) throw IoError("failed writing weights");
}

void save_weights(const ModelGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save_weights(graph, out);
}

ModelGraph load_weights(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a weight file (bad magic)");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kVersion) {
    throw ParseError("unsupported weight file version " +
                     std::to_string(version));
  }
  const auto length = read_le<std::uint64_t>(in);
  if (length > (1u << 26)) throw ParseError("manifest too large");
  std::string manifest(length, '\0');
  in.read(manifest.data(), static_cast<std::streamsize>(length));
  if (!in) throw ParseError("weight file truncated in manifest");

  ManifestReader r(manifest);
  std::string model_name;
  r.next("model") >> model_name;
  std::map<std::string, std::string> meta;
  while (r.peek_tag() == "meta") {
    auto ls = r.next("meta");
    std::string k, v;
    ls >> k;
    std::getline(ls >> std::ws, v);
    meta[k] = v;
  }
  std::vector<Block> blocks;
  while (r.peek_tag() == "block") {
    auto ls = r.next("block");
    Block b;
    std::size_t count = 0;
    int residual = 0;
    ls >> b.name >> count >> residual;
    if (!ls) throw ParseError("manifest: malformed block record", r.line());
    for (std::size_t i = 0; i < count; ++i) b.main.push_back(read_layer(r));
    if (residual) b.residual.emplace(read_layer(r));
    blocks.push_back(std::move(b));
  }
  r.next("end");

  ModelGraph g(model_name, std::move(blocks));
  g.metadata = std::move(meta);
  auto fill = [&](Layer& l) {
    for (Tensor* t : layer_tensors(l)) {
      for (double& v : t->data()) {
        v = std::bit_cast<double>(read_le<std::uint64_t>(in));
      }
    }
  };
  for (Block& b : g.blocks()) {
    for (Layer& l : b.main) fill(l);
    if (b.residual) fill(*b.residual);
  }
  in.peek();
  if (!in.eof()) throw ParseError("trailing bytes after weight payload");
  return g;
}

ModelGraph load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file '" + path + "'");
  return load_weights(in);
}

}  // namespace emo
