#pragma once

// Golden inference vectors exchanged with the training pipeline.
//
// JSON: {"format": "wobble-golden", "version": 1, "weights_sha256": "<hex>",
//        "warnings": [...],
//        "cases": [{"input": "<base64 int8[2][215]>", "logits": [5 ints], "class": code}]}

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wobble/model.hpp"

namespace wobble::model {

struct GoldenCase {
  std::vector<std::int8_t> input;  // channel-major 2 x 215
  std::array<std::int8_t, kNumClasses> logits{};
  ExerciseClass cls = ExerciseClass::kBasicStance;
};

struct GoldenSet {
  std::string weights_sha256;  // empty when the producer did not record it
  std::vector<std::string> warnings;
  std::vector<GoldenCase> cases;
};

struct GoldenMismatch {
  std::size_t index = 0;
  std::string reason;
};

struct GoldenReport {
  std::size_t cases = 0;
  std::size_t argmax_agree = 0;
  int max_logit_delta = 0;
  std::vector<GoldenMismatch> mismatches;
  std::vector<std::string> warnings;

  bool passed() const { return mismatches.empty(); }
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// Throws std::invalid_argument on a malformed document.
GoldenSet parse_golden(const nlohmann::json& j);
nlohmann::json to_json(const GoldenSet& g);

/// Replays every case: requires matching argmax and |logit delta| <= max_delta.
GoldenReport verify_golden(const ModelSpec& m, const GoldenSet& g, int max_delta = 1);

/// Builds a golden set from this engine's own outputs.
GoldenSet make_golden(const ModelSpec& m, std::span<const qnn::QuantizedTensor> inputs);

}  // namespace wobble::model
