#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace wobble {

enum class OperatingMode : std::uint8_t {
  kRawData = 0,
  kBasicBalance = 1,
  kCnnProcessing = 2,
};

inline constexpr std::size_t kNumModes = 3;

std::string_view mode_name(OperatingMode m);

/// Accepts "raw", "balance", "cnn" (case-sensitive); throws std::invalid_argument otherwise.
OperatingMode mode_from_name(std::string_view name);

// Declaration order is the scheduling priority (GetData runs first).
enum class TaskKind : std::uint8_t {
  kGetData = 0,
  kBalance = 1,
  kCnn = 2,
  kThreshold = 3,
  kSend = 4,
};

inline constexpr std::size_t kNumTasks = 5;

std::string_view task_name(TaskKind t);

}  // namespace wobble
