#include "emo/emotion.hpp"

#include <algorithm>
#include <cctype>

namespace emo {
namespace {

constexpr std::array<std::string_view, kNumEmotions> kNames{
    "Angry", "Disgust", "Fear", "Happy", "Sad", "Surprise", "Neutral"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::string_view name(Emotion e) { return kNames[static_cast<std::size_t>(e)]; }

std::optional<Emotion> emotion_from_code(int code) {
  if (code < 0 || code >= kNumEmotions) return std::nullopt;
  return static_cast<Emotion>(code);
}

std::optional<Emotion> emotion_from_name(std::string_view n) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (iequals(kNames[i], n)) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

}  // namespace emo
