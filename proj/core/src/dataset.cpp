#include "emo/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

#include "emo/error.hpp"
#include "emo/rng.hpp"

namespace emo {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Training:
      return "Training";
    case Split::PublicTest:
      return "PublicTest";
    case Split::PrivateTest:
      return "PrivateTest";
  }
  return "?";
}

Split parse_split(std::string_view tag) {
  if (tag == "Training") return Split::Training;
  if (tag == "PublicTest") return Split::PublicTest;
  if (tag == "PrivateTest") return Split::PrivateTest;
  throw InvalidArgument("unknown split '" + std::string(tag) + "'");
}

std::array<std::size_t, kNumEmotions> Dataset::class_counts() const {
  std::array<std::size_t, kNumEmotions> counts{};
  for (const Sample& s : samples) ++counts[static_cast<std::size_t>(code(s.label))];
  return counts;
}

const Dataset& FerData::get(Split split) const {
  switch (split) {
    case Split::Training:
      return training;
    case Split::PublicTest:
      return public_test;
    case Split::PrivateTest:
      return private_test;
  }
  return training;
}

Dataset& FerData::get(Split split) {
  return const_cast<Dataset&>(std::as_const(*this).get(split));
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::string line_prefix(std::size_t line) {
  return "line " + std::to_string(line) + ": ";
}

}  // namespace

FerData parse_fer_csv(std::istream& in, const FerLoadOptions& options) {
  FerData data;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "emotion,pixels,Usage") {
    throw ParseError("bad header: expected 'emotion,pixels,Usage'", 1);
  }
  std::size_t line_no = 1;
  std::vector<double> pixels;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto c1 = row.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw ParseError(line_prefix(line_no) + "expected 3 comma-separated fields",
                       line_no);
    }
    const std::string_view label_s = trim(row.substr(0, c1));
    const std::string_view pix_s = row.substr(c1 + 1, c2 - c1 - 1);
    const std::string_view usage_s = trim(row.substr(c2 + 1));

    int label = -1;
    auto [lp, lec] =
        std::from_chars(label_s.data(), label_s.data() + label_s.size(), label);
    if (lec != std::errc() || lp != label_s.data() + label_s.size()) {
      throw ParseError(line_prefix(line_no) + "label '" + std::string(label_s) +
                           "' is not an integer",
                       line_no);
    }
    const auto emotion = emotion_from_code(label);
    if (!emotion) {
      throw ParseError(line_prefix(line_no) + "label " + std::to_string(label) +
                           " out of range 0..6",
                       line_no);
    }

    pixels.clear();
    const char* p = pix_s.data();
    const char* end = pix_s.data() + pix_s.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      int v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ')) {
        throw ParseError(line_prefix(line_no) + "malformed pixel value",
                         line_no);
      }
      if (v < 0 || v > 255) {
        throw ParseError(line_prefix(line_no) + "pixel value " +
                             std::to_string(v) + " out of range 0..255",
                         line_no);
      }
      pixels.push_back(static_cast<double>(v) / 255.0);
      p = next;
    }
    if (pixels.size() != kImagePixels) {
      throw ParseError(line_prefix(line_no) + "expected " +
                           std::to_string(kImagePixels) + " pixels, got " +
                           std::to_string(pixels.size()),
                       line_no);
    }

    Split split;
    try {
      split = parse_split(usage_s);
    } catch (const InvalidArgument&) {
      throw ParseError(line_prefix(line_no) + "unknown usage tag '" +
                           std::string(usage_s) + "'",
                       line_no);
    }
    Dataset& target = data.get(split);
    if (options.max_per_split && target.size() >= options.max_per_split) {
      continue;
    }
    target.samples.push_back(
        {Tensor({1, 1, kImageSide, kImageSide}, pixels), *emotion});
  }
  return data;
}

FerData load_fer_csv(const std::string& path, const FerLoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open FER-2013 CSV '" + path + "'");
  return parse_fer_csv(in, options);
}

namespace {

// Next whitespace-delimited PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) break;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  const std::string magic = pgm_token(in);
  if (magic != "P5" && magic != "P2") {
    throw ParseError(path + ": not a PGM file");
  }
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pgm_token(in));
    h = std::stoul(pgm_token(in));
    maxval = std::stoul(pgm_token(in));
  } catch (const std::exception&) {
    throw ParseError(path + ": malformed PGM header");
  }
  if (w != kImageSide || h != kImageSide) {
    throw ParseError(path + ": expected 48x48 image, got " +
                     std::to_string(w) + "x" + std::to_string(h));
  }
  if (maxval == 0 || maxval > 255) {
    throw ParseError(path + ": only 8-bit PGM is supported");
  }
  std::vector<double> values(w * h);
  if (magic == "P5") {
    std::vector<unsigned char> raw(w * h);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (!in) throw ParseError(path + ": truncated pixel data");
    for (std::size_t i = 0; i < raw.size(); ++i) {
      values[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    }
  } else {
    for (double& v : values) {
      const std::string tok = pgm_token(in);
      if (tok.empty()) throw ParseError(path + ": truncated pixel data");
      v = std::stod(tok) / static_cast<double>(maxval);
    }
  }
  for (double& v : values) v = std::clamp(v, 0.0, 1.0);
  return Tensor({1, 1, h, w}, std::move(values));
}

void write_pgm(const std::string& path, const Tensor& image) {
  const Shape4& s = image.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_pgm expects (1,1,h,w)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << s.w << ' ' << s.h << "\n255\n";
  for (double v : image.data()) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset load_image_directory(const std::string& root, Split split) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw IoError("image directory '" + root + "' does not exist");
  }
  std::vector<std::pair<fs::path, Emotion>> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string dir = entry.path().filename().string();
    std::optional<Emotion> label;
    if (dir.size() == 1 && dir[0] >= '0' && dir[0] <= '9') {
      label = emotion_from_code(dir[0] - '0');
    } else {
      label = emotion_from_name(dir);
    }
    if (!label) {
      throw ParseError("'" + entry.path().string() +
                       "' is not a label directory (use 0-6 or an emotion name)");
    }
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.is_regular_file() && f.path().extension() == ".pgm") {
        files.emplace_back(f.path(), *label);
      }
    }
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Dataset data{split, {}};
  for (const auto& [path, label] : files) {
    data.samples.push_back({read_pgm(path.string()), label});
  }
  return data;
}

namespace {

// Pattern value in [0, 1] at pixel (y, x) for a label, after a (dy, dx)
// shift of the pattern.
double pattern(Emotion label, double y, double x) {
  constexpr double kPeriod = 8.0;
  const double c = (static_cast<double>(kImageSide) - 1.0) / 2.0;
  auto stripe = [&](double t) {
    return std::fmod(std::fmod(t, kPeriod) + kPeriod, kPeriod) < kPeriod / 2
               ? 1.0
               : 0.0;
  };
  switch (label) {
    case Emotion::Angry:  // horizontal stripes
      return stripe(y);
    case Emotion::Disgust:  // vertical stripes
      return stripe(x);
    case Emotion::Fear:  // diagonal stripes
      return stripe((x + y) / std::numbers::sqrt2);
    case Emotion::Happy: {  // filled disk
      const double r = std::hypot(y - c, x - c);
      return r < 12.0 ? 1.0 : 0.0;
    }
    case Emotion::Sad: {  // ring
      const double r = std::hypot(y - c, x - c);
      return (r > 14.0 && r < 20.0) ? 1.0 : 0.0;
    }
    case Emotion::Surprise: {  // checkerboard
      const bool a = stripe(y) > 0.5;
      const bool b = stripe(x) > 0.5;
      return a != b ? 1.0 : 0.0;
    }
    case Emotion::Neutral:  // left-to-right ramp
      return x / (static_cast<double>(kImageSide) - 1.0);
  }
  return 0.0;
}

}  // namespace

Tensor synth_image(Emotion label, std::uint64_t seed) {
  Rng rng(seed);
  const double dy = static_cast<double>(rng.below(5)) - 2.0;
  const double dx = static_cast<double>(rng.below(5)) - 2.0;
  const double contrast = rng.uniform(0.6, 1.0);
  const double offset = rng.uniform(0.0, 0.2);
  constexpr double kNoise = 0.08;
  Tensor img({1, 1, kImageSide, kImageSide});
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      const double v = offset +
                       contrast * 0.8 *
                           pattern(label, static_cast<double>(y) - dy,
                                   static_cast<double>(x) - dx) +
                       kNoise * rng.normal();
      img.at(0, 0, y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

Dataset synth_dataset(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class == 0) throw InvalidArgument("n_per_class must be >= 1");
  Rng seeds(seed);
  Dataset data{Split::Training, {}};
  data.samples.reserve(n_per_class * kNumEmotions);
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (Emotion e : kAllEmotions) {
      data.samples.push_back({synth_image(e, seeds.next()), e});
    }
  }
  return data;
}

Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("stack_images: no indices");
  const Shape4 s = data.samples.at(indices[0]).image.shape();
  Tensor batch({indices.size(), s.c, s.h, s.w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = data.samples.at(indices[i]).image;
    if (img.shape() != s) {
      throw ShapeError("stack_images: mixed image shapes");
    }
    std::copy(img.data().begin(), img.data().end(), batch.sample(i));
  }
  return batch;
}

}  // namespace emo
