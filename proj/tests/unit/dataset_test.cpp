#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "emo/dataset.hpp"
#include "emo/error.hpp"
#include "oracles.hpp"

namespace emo {
namespace {

namespace fs = std::filesystem;

std::string fixture(const char* name) { return std::string(EMO_FIXTURE_DIR) + "/" + name; }

TEST(FerCsv, LoadsSplitsAndScalesPixels) {
  const FerData d = load_fer_csv(fixture("fer_small.csv"));
  EXPECT_EQ(d.training.size(), 10u);
  EXPECT_EQ(d.public_test.size(), 2u);
  EXPECT_EQ(d.private_test.size(), 2u);
  EXPECT_EQ(d.training.samples[3].label, Emotion::Happy);
  EXPECT_EQ(d.public_test.samples[0].label, Emotion::Happy);  // row 10 -> 10 % 7
  const Tensor& img = d.training.samples[0].image;
  EXPECT_EQ(img.shape(), (Shape4{1, 1, 48, 48}));
  for (std::size_t i = 0; i < img.size(); ++i) {
    ASSERT_GE(img[i], 0.0);
    ASSERT_LE(img[i], 1.0);
  }
}

TEST(FerCsv, AcceptsWindowsLineEndings) {
  EXPECT_EQ(load_fer_csv(fixture("fer_crlf.csv")).training.size(), 3u);
}

TEST(FerCsv, MaxPerSplitTruncates) {
  const FerData d = load_fer_csv(fixture("fer_small.csv"), {.max_per_split = 4});
  EXPECT_EQ(d.training.size(), 4u);
  EXPECT_EQ(d.public_test.size(), 2u);
}

struct BadCsv {
  const char* file;
  std::size_t line;
  const char* message;
};

class FerCsvErrors : public ::testing::TestWithParam<BadCsv> {};

TEST_P(FerCsvErrors, NameTheLineAndDefect) {
  const BadCsv& c = GetParam();
  try {
    load_fer_csv(fixture(c.file));
    FAIL() << "expected a ParseError for " << c.file;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), c.line);
    EXPECT_NE(std::string(e.what()).find(c.message), std::string::npos) << e.what();
  }
}

INSTANTIATE_TEST_SUITE_P(
    Fixtures, FerCsvErrors,
    ::testing::Values(BadCsv{"fer_bad_header.csv", 1, "bad header"},
                      BadCsv{"fer_bad_label.csv", 3, "out of range 0..6"},
                      BadCsv{"fer_label_not_int.csv", 4, "not an integer"},
                      BadCsv{"fer_short_row.csv", 2, "expected 2304 pixels, got 2303"},
                      BadCsv{"fer_pixel_range.csv", 3, "pixel value 256"},
                      BadCsv{"fer_malformed_pixel.csv", 2, "malformed pixel"},
                      BadCsv{"fer_bad_usage.csv", 3, "unknown usage tag 'Validation'"},
                      BadCsv{"fer_missing_field.csv", 2, "3 comma-separated fields"}),
    [](const auto& info) {
      std::string name(info.param.file);
      name = name.substr(4, name.size() - 8);  // fer_<defect>.csv
      std::erase(name, '_');
      return name;
    });

TEST(FerCsv, MissingFileIsAnIoError) {
  EXPECT_THROW(load_fer_csv(fixture("nope.csv")), IoError);
}

TEST(FerCsv, EmptyStreamHasNoHeader) {
  std::istringstream in("");
  EXPECT_THROW(parse_fer_csv(in), ParseError);
}

TEST(Split, ParsesTags) {
  EXPECT_EQ(parse_split("PublicTest"), Split::PublicTest);
  EXPECT_EQ(to_string(Split::PrivateTest), "PrivateTest");
  EXPECT_THROW(parse_split("Test"), InvalidArgument);
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("emo_dataset_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(TempDir, PgmRoundTripAt8BitResolution) {
  const Tensor img = synth_image(Emotion::Fear, 3);
  write_pgm((root_ / "a.pgm").string(), img);
  const Tensor back = read_pgm((root_ / "a.pgm").string());
  EXPECT_LE(max_abs_diff(img, back), 0.5 / 255.0 + 1e-12);
}

TEST_F(TempDir, AsciiPgm) {
  std::ofstream f(root_ / "p2.pgm");
  f << "P2\n# comment\n48 48\n255\n";
  for (int i = 0; i < 48 * 48; ++i) f << (i % 256) << (i % 16 == 15 ? '\n' : ' ');
  f.close();
  const Tensor t = read_pgm((root_ / "p2.pgm").string());
  EXPECT_DOUBLE_EQ(t[255], 1.0);
  EXPECT_DOUBLE_EQ(t[256], 0.0);
}

TEST_F(TempDir, RejectsWrongSizePgm) {
  std::ofstream f(root_ / "small.pgm");
  f << "P2\n2 2\n255\n0 1 2 3\n";
  f.close();
  EXPECT_THROW(read_pgm((root_ / "small.pgm").string()), ParseError);
}

TEST_F(TempDir, ImageDirectoryByCodeOrName) {
  fs::create_directories(root_ / "3");
  fs::create_directories(root_ / "sad");
  write_pgm((root_ / "3" / "x.pgm").string(), synth_image(Emotion::Happy, 1));
  write_pgm((root_ / "sad" / "y.pgm").string(), synth_image(Emotion::Sad, 2));
  write_pgm((root_ / "sad" / "z.pgm").string(), synth_image(Emotion::Sad, 3));
  const Dataset d = load_image_directory(root_.string(), Split::Training);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.samples[0].label, Emotion::Happy);
  EXPECT_EQ(d.samples[2].label, Emotion::Sad);
  fs::create_directories(root_ / "misc");
  EXPECT_THROW(load_image_directory(root_.string(), Split::Training), ParseError);
}

TEST(Synthetic, DeterministicBalancedAndInRange) {
  const Dataset a = synth_dataset(5, 9);
  const Dataset b = synth_dataset(5, 9);
  ASSERT_EQ(a.size(), 35u);
  std::array<std::size_t, kNumEmotions> counts{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a.samples[i].image == b.samples[i].image);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
    ++counts[static_cast<std::size_t>(code(a.samples[i].label))];
    for (double v : a.samples[i].image.data()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  for (std::size_t c : counts) EXPECT_EQ(c, 5u);
  EXPECT_FALSE(synth_dataset(5, 10).samples[0].image == a.samples[0].image);
}

// The classes must be separable by something simple, or failing to learn
// them would say nothing about the models.
TEST(Synthetic, NearestCentroidSeparatesTheFamilies) {
  const testing::NearestCentroid oracle(synth_dataset(40, 1));
  const Dataset test = synth_dataset(20, 2);
  std::size_t correct = 0;
  for (const auto& s : test.samples) correct += oracle.predict(s.image) == s.label;
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.size()), 0.6);
}

TEST(Emotion, CodesAndNames) {
  for (Emotion e : kAllEmotions) {
    EXPECT_EQ(emotion_from_code(code(e)), e);
    EXPECT_EQ(emotion_from_name(name(e)), e);
  }
  EXPECT_EQ(emotion_from_name("HAPPY"), Emotion::Happy);
  EXPECT_FALSE(emotion_from_code(7).has_value());
  EXPECT_FALSE(emotion_from_name("contempt").has_value());
}

}  // namespace
}  // namespace emo
