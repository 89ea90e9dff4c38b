#include "wobble/qnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace wobble::qnn {

namespace {

// |w| <= 128 and |x - zp| <= 255, so fan-in up to this bound cannot overflow int32.
constexpr std::size_t kMaxFanIn =
    static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max()) / (128 * 255);

void check_fan_in(std::size_t fan_in) {
  if (fan_in > kMaxFanIn) {
    throw DimensionError("fan-in " + std::to_string(fan_in) + " overflows int32 accumulator");
  }
}

}  // namespace

std::int64_t round_half_away(double v) {
  return static_cast<std::int64_t>(v < 0.0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5));
}

std::int8_t saturate_int8(std::int64_t v) {
  return static_cast<std::int8_t>(std::clamp<std::int64_t>(v, -128, 127));
}

void QuantParams::validate() const {
  if (!(std::isfinite(scale) && scale > 0.0f)) {
    throw std::invalid_argument("quant scale must be positive and finite");
  }
  if (zero_point < -128 || zero_point > 127) {
    throw std::invalid_argument("zero point outside int8 range");
  }
}

QuantizedTensor::QuantizedTensor(std::size_t c, std::size_t l, QuantParams qp)
    : data(c * l, static_cast<std::int8_t>(qp.zero_point)), channels(c), length(l), qparams(qp) {}

QuantizedTensor::QuantizedTensor(std::vector<std::int8_t> d, std::size_t c, std::size_t l,
                                 QuantParams qp)
    : data(std::move(d)), channels(c), length(l), qparams(qp) {
  if (data.size() != channels * length) {
    throw DimensionError("tensor data size does not match channels x length");
  }
}

RequantSpec RequantSpec::from_real(double m, int output_zero_point) {
  if (!std::isfinite(m) || m < 0.0 || m >= 1.0) {
    throw std::invalid_argument("requantization factor must lie in [0, 1)");
  }
  RequantSpec spec;
  spec.output_zero_point = output_zero_point;
  if (m == 0.0) return spec;

  int exponent = 0;
  const double mantissa = std::frexp(m, &exponent);  // m = mantissa * 2^exponent, mantissa in [0.5, 1)
  std::int64_t q = std::llround(mantissa * 2147483648.0);
  if (q == (std::int64_t{1} << 31)) {
    q /= 2;
    ++exponent;
  }
  spec.multiplier = static_cast<std::int32_t>(q);
  spec.shift = -exponent;
  if (spec.shift < 0) {
    // Mantissa rounding pushed m up to 1.0.
    spec.multiplier = std::numeric_limits<std::int32_t>::max();
    spec.shift = 0;
  }
  return spec;
}

double RequantSpec::real_factor() const {
  return std::ldexp(static_cast<double>(multiplier), -(31 + shift));
}

void RequantSpec::validate() const {
  if (multiplier != 0 && multiplier < (std::int32_t{1} << 30)) {
    throw std::invalid_argument("requant multiplier not normalized");
  }
  if (multiplier < 0) throw std::invalid_argument("requant multiplier negative");
  if (shift < 0) throw std::invalid_argument("requant shift negative");
  if (output_zero_point < -128 || output_zero_point > 127) {
    throw std::invalid_argument("requant output zero point outside int8 range");
  }
}

ConvWeights::ConvWeights(std::size_t out, std::size_t in, std::size_t k)
    : out_channels(out), in_channels(in), kernel_size(k), weights(out * in * k, 0) {}

ConvWeights::ConvWeights(std::size_t out, std::size_t in, std::size_t k, std::vector<std::int8_t> w)
    : out_channels(out), in_channels(in), kernel_size(k), weights(std::move(w)) {
  if (weights.size() != out * in * k) throw DimensionError("conv weight count mismatch");
}

FcWeights::FcWeights(std::size_t out, std::size_t in)
    : out_features(out), in_features(in), weights(out * in, 0) {}

FcWeights::FcWeights(std::size_t out, std::size_t in, std::vector<std::int8_t> w)
    : out_features(out), in_features(in), weights(std::move(w)) {
  if (weights.size() != out * in) throw DimensionError("fc weight count mismatch");
}

QuantizedTensor quantize(std::span<const double> x, QuantParams qp) {
  return quantize(x, qp, 1, x.size());
}

QuantizedTensor quantize(std::span<const double> x, QuantParams qp, std::size_t channels,
                         std::size_t length) {
  qp.validate();
  if (x.size() != channels * length) throw DimensionError("quantize: size mismatch");
  std::vector<std::int8_t> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw std::domain_error("quantize: non-finite input");
    const double scaled = x[i] / static_cast<double>(qp.scale);
    // Clamp before the integer conversion so huge inputs saturate instead of overflowing.
    const double bounded = std::clamp(scaled, -1.0e6, 1.0e6);
    q[i] = saturate_int8(round_half_away(bounded) + qp.zero_point);
  }
  return QuantizedTensor(std::move(q), channels, length, qp);
}

std::vector<double> dequantize(const QuantizedTensor& t) {
  std::vector<double> out(t.data.size());
  const double scale = t.qparams.scale;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = scale * (static_cast<int>(t.data[i]) - t.qparams.zero_point);
  }
  return out;
}

std::int8_t requantize(std::int32_t acc, const RequantSpec& spec) {
  const std::int64_t product = static_cast<std::int64_t>(acc) * spec.multiplier;
  const int total_shift = 31 + spec.shift;
  const std::uint64_t magnitude =
      product < 0 ? static_cast<std::uint64_t>(-product) : static_cast<std::uint64_t>(product);
  std::uint64_t rounded = 0;
  // |product| < 2^62, so anything shifted by 63 or more rounds to zero.
  if (total_shift < 63) {
    rounded = (magnitude + (std::uint64_t{1} << (total_shift - 1))) >> total_shift;
  }
  const std::int64_t scaled =
      product < 0 ? -static_cast<std::int64_t>(rounded) : static_cast<std::int64_t>(rounded);
  return saturate_int8(scaled + spec.output_zero_point);
}

QuantizedTensor conv1d(const QuantizedTensor& input, const ConvWeights& w,
                       const RequantSpec& spec, bool relu, float output_scale) {
  if (input.channels != w.in_channels) {
    throw DimensionError("conv1d: input has " + std::to_string(input.channels) +
                         " channels, weights expect " + std::to_string(w.in_channels));
  }
  if (w.kernel_size == 0 || input.length < w.kernel_size) {
    throw DimensionError("conv1d: input shorter than kernel");
  }
  check_fan_in(w.in_channels * w.kernel_size);

  const std::size_t out_len = input.length - w.kernel_size + 1;
  const int in_zp = input.qparams.zero_point;
  const auto floor_value = static_cast<std::int8_t>(spec.output_zero_point);
  QuantizedTensor out(w.out_channels, out_len, {output_scale, spec.output_zero_point});

  for (std::size_t o = 0; o < w.out_channels; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      std::int32_t acc = 0;
      for (std::size_t c = 0; c < w.in_channels; ++c) {
        const std::int8_t* x = &input.data[c * input.length + j];
        const std::int8_t* k = &w.weights[(o * w.in_channels + c) * w.kernel_size];
        for (std::size_t t = 0; t < w.kernel_size; ++t) {
          acc += static_cast<std::int32_t>(k[t]) * (static_cast<std::int32_t>(x[t]) - in_zp);
        }
      }
      std::int8_t v = requantize(acc, spec);
      if (relu) v = std::max(v, floor_value);
      out.at(o, j) = v;
    }
  }
  return out;
}

QuantizedTensor maxpool1d(const QuantizedTensor& input, std::size_t kernel, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw DimensionError("maxpool1d: kernel and stride must be positive");
  if (kernel > input.length) throw DimensionError("maxpool1d: kernel longer than input");

  const std::size_t out_len = (input.length - kernel) / stride + 1;
  QuantizedTensor out(input.channels, out_len, input.qparams);
  for (std::size_t c = 0; c < input.channels; ++c) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const auto first = input.data.begin() + static_cast<std::ptrdiff_t>(c * input.length + j * stride);
      out.at(c, j) = *std::max_element(first, first + static_cast<std::ptrdiff_t>(kernel));
    }
  }
  return out;
}

QuantizedTensor fully_connected(const QuantizedTensor& input, const FcWeights& w,
                                const RequantSpec& spec, bool relu, float output_scale) {
  if (input.size() != w.in_features) {
    throw DimensionError("fully_connected: input has " + std::to_string(input.size()) +
                         " elements, weights expect " + std::to_string(w.in_features));
  }
  check_fan_in(w.in_features);

  const int in_zp = input.qparams.zero_point;
  const auto floor_value = static_cast<std::int8_t>(spec.output_zero_point);
  QuantizedTensor out(1, w.out_features, {output_scale, spec.output_zero_point});
  for (std::size_t o = 0; o < w.out_features; ++o) {
    const std::int8_t* row = &w.weights[o * w.in_features];
    std::int32_t acc = 0;
    for (std::size_t i = 0; i < w.in_features; ++i) {
      acc += static_cast<std::int32_t>(row[i]) * (static_cast<std::int32_t>(input.data[i]) - in_zp);
    }
    std::int8_t v = requantize(acc, spec);
    if (relu) v = std::max(v, floor_value);
    out.data[o] = v;
  }
  return out;
}

QuantizedTensor flatten(const QuantizedTensor& input) {
  QuantizedTensor out = input;
  out.channels = 1;
  out.length = input.size();
  return out;
}

}  // namespace wobble::qnn
