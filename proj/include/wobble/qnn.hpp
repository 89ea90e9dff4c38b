#pragma once

// Integer-only 1-D CNN kernels with affine int8 activations, symmetric int8
// weights, no bias and arbitrary output scales encoded as Q0.31 multiplier
// plus right shift.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace wobble::qnn {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rounds to nearest, ties away from zero. Used by every quantizing step.
std::int64_t round_half_away(double v);

/// Saturates to [-128, 127].
std::int8_t saturate_int8(std::int64_t v);

struct QuantParams {
  float scale = 1.0f;  // real units per quantum
  int zero_point = 0;

  /// Throws std::invalid_argument if scale <= 0 / non-finite or zero_point is out of int8 range.
  void validate() const;
  bool operator==(const QuantParams&) const = default;
};

struct QuantizedTensor {
  std::vector<std::int8_t> data;  // channel-major: data[c * length + j]
  std::size_t channels = 0;
  std::size_t length = 0;
  QuantParams qparams;

  QuantizedTensor() = default;
  QuantizedTensor(std::size_t channels, std::size_t length, QuantParams qp);
  QuantizedTensor(std::vector<std::int8_t> data, std::size_t channels,
                  std::size_t length, QuantParams qp);

  std::int8_t at(std::size_t c, std::size_t j) const { return data[c * length + j]; }
  std::int8_t& at(std::size_t c, std::size_t j) { return data[c * length + j]; }
  std::size_t size() const { return data.size(); }

  bool operator==(const QuantizedTensor&) const = default;
};

/// Effective real factor M = multiplier * 2^-(31 + shift).
struct RequantSpec {
  std::int32_t multiplier = 0;
  int shift = 0;
  int output_zero_point = 0;

  /// Encodes 0 < m < 1 with a normalized multiplier (>= 2^30). m == 0 gives
  /// the degenerate all-zero spec. Throws std::invalid_argument otherwise.
  static RequantSpec from_real(double m, int output_zero_point);

  double real_factor() const;

  /// Throws std::invalid_argument unless the multiplier is normalized (or zero),
  /// shift >= 0 and the zero point fits int8.
  void validate() const;

  bool operator==(const RequantSpec&) const = default;
};

struct ConvWeights {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_size = 0;
  std::vector<std::int8_t> weights;  // [out][in][k]

  ConvWeights() = default;
  ConvWeights(std::size_t out, std::size_t in, std::size_t k);
  ConvWeights(std::size_t out, std::size_t in, std::size_t k, std::vector<std::int8_t> w);

  std::int8_t at(std::size_t o, std::size_t c, std::size_t k) const {
    return weights[(o * in_channels + c) * kernel_size + k];
  }
  std::int8_t& at(std::size_t o, std::size_t c, std::size_t k) {
    return weights[(o * in_channels + c) * kernel_size + k];
  }

  bool operator==(const ConvWeights&) const = default;
};

struct FcWeights {
  std::size_t out_features = 0;
  std::size_t in_features = 0;
  std::vector<std::int8_t> weights;  // [out][in]

  FcWeights() = default;
  FcWeights(std::size_t out, std::size_t in);
  FcWeights(std::size_t out, std::size_t in, std::vector<std::int8_t> w);

  std::int8_t at(std::size_t o, std::size_t i) const { return weights[o * in_features + i]; }
  std::int8_t& at(std::size_t o, std::size_t i) { return weights[o * in_features + i]; }

  bool operator==(const FcWeights&) const = default;
};

/// q = clamp(round(x / scale) + zero_point). Result has dims (1, x.size()).
/// Throws std::domain_error on non-finite input.
QuantizedTensor quantize(std::span<const double> x, QuantParams qp);
QuantizedTensor quantize(std::span<const double> x, QuantParams qp,
                         std::size_t channels, std::size_t length);

std::vector<double> dequantize(const QuantizedTensor& t);

/// clamp(round(acc * M) + zp) with a 64-bit intermediate product.
std::int8_t requantize(std::int32_t acc, const RequantSpec& spec);

/// Stride 1, no padding. Output length = input.length - kernel_size + 1.
/// With relu the output is clamped below at the output zero point.
QuantizedTensor conv1d(const QuantizedTensor& input, const ConvWeights& w,
                       const RequantSpec& spec, bool relu, float output_scale = 1.0f);

/// Window max over [i*stride, i*stride + kernel); trailing remainder dropped.
QuantizedTensor maxpool1d(const QuantizedTensor& input, std::size_t kernel, std::size_t stride);

/// Input is read in its flattened channel-major order.
QuantizedTensor fully_connected(const QuantizedTensor& input, const FcWeights& w,
                                const RequantSpec& spec, bool relu, float output_scale = 1.0f);

QuantizedTensor flatten(const QuantizedTensor& input);

}  // namespace wobble::qnn
