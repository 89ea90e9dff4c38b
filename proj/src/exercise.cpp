#include "wobble/exercise.hpp"

#include <stdexcept>
#include <string>

#include "wobble/mode.hpp"

namespace wobble {

namespace {
constexpr std::array<std::string_view, kNumClasses> kLabels = {"B", "FB", "S", "R", "G"};
constexpr std::array<std::string_view, 3> kModeNames = {"raw", "balance", "cnn"};
constexpr std::array<std::string_view, 5> kTaskNames = {"get_data", "balance", "cnn", "threshold", "send"};
}  // namespace

std::string_view class_label(ExerciseClass c) { return kLabels.at(class_code(c)); }

ExerciseClass class_from_label(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) return static_cast<ExerciseClass>(i);
  }
  throw std::invalid_argument("unknown exercise class '" + std::string(label) + "'");
}

ExerciseClass class_from_code(int code) {
  if (code < 0 || code >= static_cast<int>(kNumClasses)) {
    throw std::out_of_range("exercise class code " + std::to_string(code));
  }
  return static_cast<ExerciseClass>(code);
}

std::string_view mode_name(OperatingMode m) { return kModeNames.at(static_cast<std::size_t>(m)); }

OperatingMode mode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == name) return static_cast<OperatingMode>(i);
  }
  throw std::invalid_argument("unknown operating mode '" + std::string(name) + "'");
}

std::string_view task_name(TaskKind t) { return kTaskNames.at(static_cast<std::size_t>(t)); }

}  // namespace wobble
