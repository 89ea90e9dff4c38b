#pragma once

// Shared test helpers: an arbitrary-precision reference for the integer
// kernels, random case generators and a randomly weighted model.

#include <cstdint>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "wobble/model.hpp"
#include "wobble/qnn.hpp"

namespace wobble::testing {

namespace mp = boost::multiprecision;

// Reference requantization: the accumulator times the exact rational factor
// multiplier / 2^(31 + shift), rounded half away from zero, plus the zero
// point, clamped to int8. No fixed-width arithmetic anywhere.
inline int oracle_requantize(const mp::cpp_int& acc, std::int64_t multiplier, int shift, int zero_point) {
  const mp::cpp_rational value(acc * multiplier, mp::cpp_int(1) << (31 + shift));
  const mp::cpp_rational mag = value < 0 ? mp::cpp_rational(-value) : value;
  const mp::cpp_rational half(1, 2);
  const mp::cpp_rational shifted = mag + half;
  mp::cpp_int floor_mag = mp::numerator(shifted) / mp::denominator(shifted);  // both positive: truncation = floor
  mp::cpp_int rounded = value < 0 ? mp::cpp_int(-floor_mag) : floor_mag;
  rounded += zero_point;
  if (rounded > 127) return 127;
  if (rounded < -128) return -128;
  return rounded.convert_to<int>();
}

inline std::vector<int> oracle_conv1d(const qnn::QuantizedTensor& in, const qnn::ConvWeights& w,
                                      const qnn::RequantSpec& spec, bool relu) {
  const std::size_t out_len = in.length - w.kernel_size + 1;
  std::vector<int> out(w.out_channels * out_len);
  for (std::size_t o = 0; o < w.out_channels; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      mp::cpp_int acc = 0;
      for (std::size_t c = 0; c < w.in_channels; ++c) {
        for (std::size_t k = 0; k < w.kernel_size; ++k) {
          acc += mp::cpp_int(w.at(o, c, k)) * (mp::cpp_int(in.at(c, j + k)) - in.qparams.zero_point);
        }
      }
      int v = oracle_requantize(acc, spec.multiplier, spec.shift, spec.output_zero_point);
      if (relu && v < spec.output_zero_point) v = spec.output_zero_point;
      out[o * out_len + j] = v;
    }
  }
  return out;
}

inline std::vector<int> oracle_fc(const qnn::QuantizedTensor& in, const qnn::FcWeights& w,
                                  const qnn::RequantSpec& spec, bool relu) {
  std::vector<int> out(w.out_features);
  for (std::size_t o = 0; o < w.out_features; ++o) {
    mp::cpp_int acc = 0;
    for (std::size_t i = 0; i < w.in_features; ++i) {
      acc += mp::cpp_int(w.at(o, i)) * (mp::cpp_int(in.data[i]) - in.qparams.zero_point);
    }
    int v = oracle_requantize(acc, spec.multiplier, spec.shift, spec.output_zero_point);
    if (relu && v < spec.output_zero_point) v = spec.output_zero_point;
    out[o] = v;
  }
  return out;
}

inline std::vector<int> widen(const qnn::QuantizedTensor& t) { return {t.data.begin(), t.data.end()}; }

inline std::int8_t random_int8(std::mt19937_64& rng) {
  return static_cast<std::int8_t>(std::uniform_int_distribution<int>(-128, 127)(rng));
}

inline std::vector<std::int8_t> random_bytes(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::int8_t> v(n);
  for (auto& b : v) b = random_int8(rng);
  return v;
}

// Normalized multiplier in [2^30, 2^31), or zero now and then.
inline qnn::RequantSpec random_spec(std::mt19937_64& rng, int max_shift) {
  qnn::RequantSpec s;
  if (std::uniform_int_distribution<int>(0, 49)(rng) != 0) {
    s.multiplier = std::uniform_int_distribution<std::int32_t>(1 << 30, INT32_MAX)(rng);
  }
  s.shift = std::uniform_int_distribution<int>(0, max_shift)(rng);
  s.output_zero_point = std::uniform_int_distribution<int>(-128, 127)(rng);
  return s;
}

inline qnn::QuantParams random_qparams(std::mt19937_64& rng) {
  return {std::uniform_real_distribution<float>(0.01f, 4.0f)(rng), std::uniform_int_distribution<int>(-128, 127)(rng)};
}

// Reference topology with random weights and requant factors sized so that
// activations stay inside the int8 range most of the time.
inline model::ModelSpec random_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  model::ModelSpec m = model::make_reference_model({8.0f, 0});
  const double factors[] = {1.0 / 600.0, 1.0 / 800.0, 1.0 / 1500.0, 1.0 / 800.0};
  std::size_t next = 0;
  for (auto& layer : m.layers) {
    if (auto* c = std::get_if<model::ConvLayer>(&layer)) {
      c->weights.weights = random_bytes(rng, c->weights.weights.size());
      c->requant = qnn::RequantSpec::from_real(factors[next++], -128);
    } else if (auto* f = std::get_if<model::FcLayer>(&layer)) {
      f->weights.weights = random_bytes(rng, f->weights.weights.size());
      f->requant = qnn::RequantSpec::from_real(factors[next++], f->relu ? -128 : 0);
    }
  }
  return m;
}

}  // namespace wobble::testing
