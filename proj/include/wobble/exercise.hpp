#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace wobble {

// Codes are stable: they appear in weight files, result packets and manifests.
enum class ExerciseClass : std::uint8_t {
  kBasicStance = 0,   // B
  kForwardBack = 1,   // FB
  kSideTilt = 2,      // S
  kRotation = 3,      // R
  kOther = 4,         // G
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<ExerciseClass, kNumClasses> kAllClasses = {
    ExerciseClass::kBasicStance, ExerciseClass::kForwardBack,
    ExerciseClass::kSideTilt, ExerciseClass::kRotation, ExerciseClass::kOther};

constexpr std::uint8_t class_code(ExerciseClass c) {
  return static_cast<std::uint8_t>(c);
}

/// Short label used on disk ("B", "FB", "S", "R", "G").
std::string_view class_label(ExerciseClass c);

/// Inverse of class_label; throws std::invalid_argument on unknown labels.
ExerciseClass class_from_label(std::string_view label);

/// Throws std::out_of_range for codes >= 5.
ExerciseClass class_from_code(int code);

}  // namespace wobble
