#pragma once

// The deployed exercise classifier: layer stack, weight-file format and
// window / recording classification.
//
// Weight file (little-endian):
//   "WBNN" | u16 version=1 | u16 layer_count
//   input: u16 channels | u16 length | f32 scale | i8 zero_point | 3 pad
//   per layer: u8 type (1 conv, 2 pool, 3 fc, 4 flatten) | u8 relu | body
//     conv: u16 in | u16 out | u16 k | i8 out_zp | i8 pad | i32 multiplier |
//           i8 shift | 3 pad | f32 out_scale | int8 weights[out][in][k]
//     pool: u16 kernel | u16 stride
//     fc:   u32 in | u32 out | i8 out_zp | i8 pad | i32 multiplier |
//           i8 shift | 3 pad | f32 out_scale | int8 weights[out][in]
//   u32 CRC-32 (IEEE) of every preceding byte

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "wobble/exercise.hpp"
#include "wobble/qnn.hpp"
#include "wobble/signal.hpp"

namespace wobble::model {

struct ConvLayer {
  qnn::ConvWeights weights;
  qnn::RequantSpec requant;
  float output_scale = 1.0f;
  bool relu = true;
  bool operator==(const ConvLayer&) const = default;
};

struct PoolLayer {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  bool operator==(const PoolLayer&) const = default;
};

struct FlattenLayer {
  bool operator==(const FlattenLayer&) const = default;
};

struct FcLayer {
  qnn::FcWeights weights;
  qnn::RequantSpec requant;
  float output_scale = 1.0f;
  bool relu = false;
  bool operator==(const FcLayer&) const = default;
};

using Layer = std::variant<ConvLayer, PoolLayer, FlattenLayer, FcLayer>;

struct ModelSpec {
  std::size_t input_channels = 2;
  std::size_t input_length = signal::kWindowSamples;
  qnn::QuantParams input;
  std::vector<Layer> layers;

  bool operator==(const ModelSpec&) const = default;
};

/// (channels, length) after each layer, starting with the input.
struct Shape {
  std::size_t channels = 0;
  std::size_t length = 0;
  bool operator==(const Shape&) const = default;
};

class WeightFileError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kBadVersion, kTruncated, kBadChecksum, kBadLayer, kShapeMismatch };

  WeightFileError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Shape after every layer; throws WeightFileError(kShapeMismatch) if the chain breaks.
std::vector<Shape> shape_chain(const ModelSpec& m);

/// Throws WeightFileError(kShapeMismatch) unless m is the 2x215 -> conv9 -> pool2
/// -> conv9 -> pool2 -> flatten -> fc100 -> fc5 stack.
void check_reference_topology(const ModelSpec& m);

std::vector<std::uint8_t> serialize(const ModelSpec& m);

/// Parses any internally consistent layer stack.
ModelSpec deserialize(std::span<const std::uint8_t> bytes);

/// deserialize plus check_reference_topology.
ModelSpec load_weights(std::span<const std::uint8_t> bytes);
ModelSpec load_weights_file(const std::filesystem::path& path);
void save_weights_file(const std::filesystem::path& path, const ModelSpec& m);

/// Reference stack with all-zero weights; each layer requantizes by `factor`
/// into zero point 0.
ModelSpec make_reference_model(qnn::QuantParams input, double factor = 0.5);

/// Runs the layer chain. Throws qnn::DimensionError if the input shape is wrong.
qnn::QuantizedTensor forward(const ModelSpec& m, const qnn::QuantizedTensor& input);

struct Inference {
  ExerciseClass cls = ExerciseClass::kBasicStance;
  std::array<std::int8_t, kNumClasses> logits{};
};

/// Argmax over the final int8 logits, lowest class code on ties.
ExerciseClass argmax_class(std::span<const std::int8_t> logits);

Inference infer_window(const ModelSpec& m, const qnn::QuantizedTensor& window);

/// Quantizes raw counts (x channel first) with the model's input parameters.
qnn::QuantizedTensor quantize_window(const ModelSpec& m, std::span<const std::int16_t> x,
                                     std::span<const std::int16_t> y);
qnn::QuantizedTensor quantize_window(const ModelSpec& m, const signal::Window& w);

struct TimedClass {
  double t_s = 0.0;  // end of the analysed window
  Inference result;
};

/// Slides a 15 s window (downsampled by 7) at stride_s and classifies each.
/// Throws std::invalid_argument if the recording is shorter than one window.
std::vector<TimedClass> classify_recording(const ModelSpec& m, const signal::Recording& r,
                                           double stride_s = 1.0);

}  // namespace wobble::model
