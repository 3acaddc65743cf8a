#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace emo {

/// The seven expression classes with their FER-2013 integer codes.
enum class Emotion : int {
  Angry = 0,
  Disgust = 1,
  Fear = 2,
  Happy = 3,
  Sad = 4,
  Surprise = 5,
  Neutral = 6,
};

inline constexpr int kNumEmotions = 7;

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions{
    Emotion::Angry, Emotion::Disgust,  Emotion::Fear,   Emotion::Happy,
    Emotion::Sad,   Emotion::Surprise, Emotion::Neutral};

constexpr int code(Emotion e) { return static_cast<int>(e); }

std::string_view name(Emotion e);

/// Code 0..6 to label; nullopt outside the range.
std::optional<Emotion> emotion_from_code(int code);

/// Case-insensitive name lookup ("happy", "Happy").
std::optional<Emotion> emotion_from_name(std::string_view name);

}  // namespace emo
