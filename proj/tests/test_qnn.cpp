#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "support.hpp"
#include "wobble/qnn.hpp"

using namespace wobble;
using namespace wobble::qnn;
using wobble::testing::oracle_conv1d;
using wobble::testing::oracle_fc;
using wobble::testing::oracle_requantize;
using wobble::testing::widen;

namespace {

QuantizedTensor tensor(std::vector<int> values, std::size_t channels, QuantParams qp = {1.0f, 0}) {
  std::vector<std::int8_t> d(values.begin(), values.end());
  const std::size_t n = d.size();
  return QuantizedTensor(std::move(d), channels, n / channels, qp);
}

constexpr std::int32_t kHalf = 1 << 30;
constexpr std::int32_t kAlmostOne = std::numeric_limits<std::int32_t>::max();

}  // namespace

TEST_CASE("quantize examples") {
  const std::vector<double> zero{0.0};
  CHECK(widen(quantize(zero, {0.5f, 0})) == std::vector<int>{0});
  const std::vector<double> x{1.26};
  CHECK(widen(quantize(x, {0.5f, 0})) == std::vector<int>{3});
  const std::vector<double> big{100.0};
  CHECK(widen(quantize(big, {0.5f, 10})) == std::vector<int>{127});
  const std::vector<double> tie{-0.75, 0.75};
  CHECK(widen(quantize(tie, {0.5f, 0})) == std::vector<int>{-2, 2});
}

TEST_CASE("quantize rejects non-finite input and bad params") {
  const std::vector<double> nan{std::nan("")};
  CHECK_THROWS_AS(quantize(nan, {1.0f, 0}), std::domain_error);
  const std::vector<double> inf{std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(quantize(inf, {1.0f, 0}), std::domain_error);
  const std::vector<double> ok{1.0};
  CHECK_THROWS(quantize(ok, {0.0f, 0}));
  CHECK_THROWS(quantize(ok, {1.0f, 200}));
}

TEST_CASE("dequantize examples") {
  CHECK(dequantize(tensor({0}, 1, {0.5f, 0})) == std::vector<double>{0.0});
  CHECK(dequantize(tensor({3}, 1, {0.5f, 0})) == std::vector<double>{1.5});
  CHECK(dequantize(tensor({-128}, 1, {0.1f, -8}))[0] == doctest::Approx(-12.0).epsilon(1e-6));
}

TEST_CASE("quantize/dequantize round trip stays within half a quantum") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const QuantParams qp = testing::random_qparams(rng);
    const double lo = qp.scale * (-128 - qp.zero_point);
    const double hi = qp.scale * (127 - qp.zero_point);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> x(32);
    for (auto& v : x) v = dist(rng);
    const auto back = dequantize(quantize(x, qp));
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::abs(back[i] - x[i]) <= qp.scale / 2.0 * (1.0 + 1e-6));
    }
  }
}

TEST_CASE("dequantize then quantize is the identity") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const QuantParams qp = testing::random_qparams(rng);
    const QuantizedTensor t(testing::random_bytes(rng, 64), 2, 32, qp);
    const auto real = dequantize(t);
    CHECK(quantize(real, qp, 2, 32) == t);
  }
}

TEST_CASE("requantize examples") {
  CHECK(requantize(0, {kHalf, 3, -17}) == -17);
  CHECK(requantize(100, {kHalf, 0, 0}) == 50);
  CHECK(requantize(3, {kHalf, 0, 0}) == 2);
  CHECK(requantize(-3, {kHalf, 0, 0}) == -2);
  CHECK(requantize(1000, {kHalf, 0, 0}) == 127);
  CHECK(requantize(-1000, {kHalf, 0, 0}) == -128);
}

TEST_CASE("requantize handles extreme accumulators and shifts") {
  CHECK(requantize(std::numeric_limits<std::int32_t>::min(), {kAlmostOne, 0, 0}) == -128);
  CHECK(requantize(std::numeric_limits<std::int32_t>::max(), {kAlmostOne, 40, 5}) == 5);
  CHECK(requantize(std::numeric_limits<std::int32_t>::max(), {kAlmostOne, 24, 0}) == 127);
  CHECK(requantize(12345, {0, 0, 7}) == 7);
}

TEST_CASE("requantize agrees with the big-integer oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::int32_t> acc_dist(std::numeric_limits<std::int32_t>::min(),
                                                       std::numeric_limits<std::int32_t>::max());
  std::uniform_int_distribution<std::int32_t> small(-100000, 100000);
  for (int i = 0; i < 5000; ++i) {
    const RequantSpec s = testing::random_spec(rng, 40);
    const std::int32_t acc = (i % 2) ? acc_dist(rng) : small(rng);
    REQUIRE(requantize(acc, s) == oracle_requantize(acc, s.multiplier, s.shift, s.output_zero_point));
  }
}

TEST_CASE("requantize is monotone in the accumulator") {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::int32_t> acc_dist(-5'000'000, 5'000'000);
  for (int i = 0; i < 2000; ++i) {
    const RequantSpec s = testing::random_spec(rng, 20);
    std::int32_t a = acc_dist(rng);
    std::int32_t b = acc_dist(rng);
    if (a > b) std::swap(a, b);
    CHECK(requantize(a, s) <= requantize(b, s));
  }
}

TEST_CASE("RequantSpec encoding") {
  const RequantSpec half = RequantSpec::from_real(0.5, 0);
  CHECK(half.multiplier == kHalf);
  CHECK(half.shift == 0);
  CHECK(half.real_factor() == 0.5);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(-30.0, -0.01);
  for (int i = 0; i < 500; ++i) {
    const double m = std::exp2(dist(rng));
    const RequantSpec s = RequantSpec::from_real(m, 3);
    CHECK_NOTHROW(s.validate());
    CHECK(s.multiplier >= kHalf);
    CHECK(std::abs(s.real_factor() - m) <= m * std::ldexp(1.0, -30));
  }
  CHECK(RequantSpec::from_real(0.0, 4).multiplier == 0);
  CHECK_THROWS(RequantSpec::from_real(1.0, 0));
  CHECK_THROWS(RequantSpec::from_real(-0.1, 0));
  CHECK_THROWS((RequantSpec{12345, 0, 0}.validate()));
  CHECK_THROWS((RequantSpec{kHalf, -1, 0}.validate()));
  CHECK_THROWS((RequantSpec{kHalf, 0, 128}.validate()));
}

TEST_CASE("conv1d examples") {
  const ConvWeights w(1, 1, 2, {1, -1});
  const auto out = conv1d(tensor({5, 7, 4}, 1), w, {kAlmostOne, 0, 0}, false);
  CHECK(widen(out) == std::vector<int>{-2, 3});
  CHECK(out.length == 2);

  const auto shaped = conv1d(QuantizedTensor(2, 215, {1.0f, 0}), ConvWeights(20, 2, 9), {kHalf, 0, 0}, true);
  CHECK(shaped.channels == 20);
  CHECK(shaped.length == 207);
  for (auto v : shaped.data) CHECK(v == 0);
}

TEST_CASE("conv1d relu clamps at the output zero point") {
  const ConvWeights w(1, 1, 1, {-1});
  const auto out = conv1d(tensor({10, -10}, 1), w, {kAlmostOne, 0, -5}, true);
  CHECK(widen(out) == std::vector<int>{-5, 5});
  const auto no_relu = conv1d(tensor({10, -10}, 1), w, {kAlmostOne, 0, -5}, false);
  CHECK(widen(no_relu) == std::vector<int>{-15, 5});
}

TEST_CASE("conv1d subtracts the input zero point") {
  const ConvWeights w(1, 1, 1, {2});
  const auto out = conv1d(tensor({3, 4}, 1, {1.0f, 3}), w, {kHalf, 0, 0}, false);
  CHECK(widen(out) == std::vector<int>{0, 1});
}

TEST_CASE("conv1d dimension errors") {
  CHECK_THROWS_AS(conv1d(QuantizedTensor(3, 10, {}), ConvWeights(1, 2, 3), {kHalf, 0, 0}, false), DimensionError);
  CHECK_THROWS_AS(conv1d(QuantizedTensor(2, 2, {}), ConvWeights(1, 2, 3), {kHalf, 0, 0}, false), DimensionError);
  CHECK_THROWS_AS(ConvWeights(1, 2, 3, {1, 2}), DimensionError);
}

TEST_CASE("maxpool1d examples") {
  CHECK(widen(maxpool1d(tensor({1, 5, 3, 2, 9}, 1), 2, 2)) == std::vector<int>{5, 3});
  CHECK(maxpool1d(QuantizedTensor(20, 207, {}), 2, 2).length == 103);
  CHECK(maxpool1d(QuantizedTensor(20, 95, {}), 2, 2).length == 47);
  const auto constant = maxpool1d(QuantizedTensor(std::vector<std::int8_t>(10, 7), 1, 10, {0.3f, 2}), 2, 2);
  CHECK(constant.length == 5);
  CHECK(constant.qparams == QuantParams{0.3f, 2});
  for (auto v : constant.data) CHECK(v == 7);
  CHECK_THROWS_AS(maxpool1d(tensor({1}, 1), 2, 2), DimensionError);
  CHECK_THROWS_AS(maxpool1d(tensor({1, 2}, 1), 0, 1), DimensionError);
}

TEST_CASE("maxpool1d matches a brute-force maximum") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, len)(rng);
    const std::size_t s = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const QuantizedTensor in(testing::random_bytes(rng, 3 * len), 3, len, {});
    const auto out = maxpool1d(in, k, s);
    std::size_t expected_len = 0;
    while (expected_len * s + k <= len) ++expected_len;
    REQUIRE(out.length == expected_len);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t j = 0; j < out.length; ++j) {
        int best = -129;
        for (std::size_t t = 0; t < k; ++t) best = std::max(best, static_cast<int>(in.at(c, j * s + t)));
        CHECK(out.at(c, j) == best);
      }
    }
  }
}

TEST_CASE("fully_connected examples") {
  const FcWeights w(1, 2, {2, -1});
  CHECK(widen(fully_connected(tensor({3, 4}, 1), w, {kAlmostOne, 0, 0}, false)) == std::vector<int>{2});

  const auto hidden = fully_connected(QuantizedTensor(1, 940, {}), FcWeights(100, 940), {kHalf, 0, 0}, true);
  CHECK(hidden.size() == 100);
  const auto logits = fully_connected(hidden, FcWeights(5, 100), {kHalf, 0, 0}, false);
  CHECK(logits.size() == 5);

  std::mt19937_64 rng(41);
  const FcWeights rw(4, 6, testing::random_bytes(rng, 24));
  const auto at_zp = fully_connected(QuantizedTensor(1, 6, {0.5f, -9}), rw, {kHalf, 2, 13}, false);
  for (auto v : at_zp.data) CHECK(v == 13);

  CHECK_THROWS_AS(fully_connected(QuantizedTensor(1, 5, {}), rw, {kHalf, 0, 0}, false), DimensionError);
}

TEST_CASE("flatten is layout preserving") {
  const auto f = flatten(tensor({1, 2, 3, 4, 5, 6}, 2));
  CHECK(f.channels == 1);
  CHECK(f.length == 6);
  CHECK(widen(f) == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(flatten(QuantizedTensor(20, 47, {})).length == 940);
  const auto same = tensor({4, 5}, 1);
  CHECK(flatten(same) == same);
}

TEST_CASE("conv1d and fully_connected agree with the big-integer oracle") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t cin = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const std::size_t cout = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(k, 32)(rng);
    const QuantizedTensor in(testing::random_bytes(rng, cin * len), cin, len, testing::random_qparams(rng));
    const ConvWeights w(cout, cin, k, testing::random_bytes(rng, cout * cin * k));
    const RequantSpec s = testing::random_spec(rng, 12);
    const bool relu = trial % 2 == 0;
    REQUIRE(widen(conv1d(in, w, s, relu)) == oracle_conv1d(in, w, s, relu));

    const FcWeights fw(cout, cin * len, testing::random_bytes(rng, cout * cin * len));
    REQUIRE(widen(fully_connected(flatten(in), fw, s, relu)) == oracle_fc(flatten(in), fw, s, relu));
  }
}

TEST_CASE("kernels are safe to call concurrently") {
  std::mt19937_64 rng(61);
  const QuantizedTensor in(testing::random_bytes(rng, 4 * 64), 4, 64, {0.5f, 3});
  const ConvWeights w(8, 4, 5, testing::random_bytes(rng, 8 * 4 * 5));
  const RequantSpec s = RequantSpec::from_real(0.001, -4);
  const auto expected = conv1d(in, w, s, true);
  std::vector<QuantizedTensor> results(8);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < results.size(); ++i) {
      pool.emplace_back([&, i] { results[i] = conv1d(in, w, s, true); });
    }
  }
  for (const auto& r : results) CHECK(r == expected);
}
