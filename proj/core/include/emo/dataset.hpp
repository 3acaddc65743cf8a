#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emo/emotion.hpp"
#include "emo/tensor.hpp"

namespace emo {

inline constexpr std::size_t kImageSide = 48;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

enum class Split { Training, PublicTest, PrivateTest };

std::string_view to_string(Split split);
/// Accepts the FER-2013 usage tags; throws InvalidArgument otherwise.
Split parse_split(std::string_view tag);

/// One grayscale image of shape (1, 1, 48, 48) with values in [0, 1].
struct Sample {
  Tensor image;
  Emotion label = Emotion::Neutral;
};

struct Dataset {
  Split split = Split::Training;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::array<std::size_t, kNumEmotions> class_counts() const;
};

struct FerData {
  Dataset training{Split::Training, {}};
  Dataset public_test{Split::PublicTest, {}};
  Dataset private_test{Split::PrivateTest, {}};

  const Dataset& get(Split split) const;
  Dataset& get(Split split);
};

struct FerLoadOptions {
  /// Stop keeping rows of a split after this many; 0 keeps all.
  std::size_t max_per_split = 0;
};

/// Parses the FER-2013 CSV layout:
///   emotion,pixels,Usage
///   <0-6>,<2304 space-separated 0-255 values>,<Training|PublicTest|PrivateTest>
/// Pixels are reshaped row-major to 48x48 and divided by 255. Errors are
/// ParseError with the 1-based file line: bad header, wrong pixel count,
/// label out of range, bad pixel value, unknown usage tag.
FerData parse_fer_csv(std::istream& in, const FerLoadOptions& options = {});

/// Throws IoError when the file cannot be opened.
FerData load_fer_csv(const std::string& path,
                     const FerLoadOptions& options = {});

/// Reads a 48x48 8-bit PGM (P2 or P5) into a (1,1,48,48) tensor in [0,1].
Tensor read_pgm(const std::string& path);
/// Writes a (1,1,h,w) tensor with values in [0,1] as binary PGM (P5).
void write_pgm(const std::string& path, const Tensor& image);

/// Loads `root/<label>/*.pgm` where <label> is a code 0-6 or an emotion
/// name (case-insensitive). Files are visited in sorted path order.
Dataset load_image_directory(const std::string& root,
                             Split split = Split::Training);

/// Seven pattern families, one per label, with per-sample jitter and
/// Gaussian noise. Deterministic for a seed; samples are interleaved by
/// label (0, 1, ..., 6, 0, 1, ...).
Dataset synth_dataset(std::size_t n_per_class, std::uint64_t seed);

/// One image of label `label`'s family; used for synthetic frame streams.
Tensor synth_image(Emotion label, std::uint64_t seed);

/// Stacks the images at `indices` into one (k, 1, 48, 48) batch.
Tensor stack_images(const Dataset& data, std::span<const std::size_t> indices);

}  // namespace emo
