#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "iseg/qcore.hpp"

using namespace iseg;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::kBadArgument;
}

}  // namespace

TEST_CASE("scale_from_threshold") {
  CHECK(scale_from_threshold(127.5, 8) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(scale_from_threshold(1.27, 8) ==
        doctest::Approx(2.54 / 255.0).epsilon(1e-12));
  CHECK(scale_from_threshold(1.0, 16) ==
        doctest::Approx(2.0 / 65535.0).epsilon(1e-12));
  CHECK(code_of([] { scale_from_threshold(0.0, 8); }) == Errc::kInvalidThreshold);
  CHECK(code_of([] { scale_from_threshold(-1.0, 8); }) == Errc::kInvalidThreshold);
}

TEST_CASE("to_dyadic powers of two are exact") {
  const DyadicScale a = to_dyadic(0.25, 15);
  CHECK(a.b == 16384);
  CHECK(a.c == 16);
  const DyadicScale b = to_dyadic(1.0, 15);
  CHECK(b.b == 16384);
  CHECK(b.c == 14);
  CHECK(b.value() == 1.0);
}

TEST_CASE("to_dyadic fidelity bound") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logs(-20.0, 4.0);
  for (int i = 0; i < 5000; ++i) {
    const double s = std::exp2(logs(rng));
    const DyadicScale d = to_dyadic(s, 15);
    CHECK(d.b >= 16384);
    CHECK(d.b < 32768);
    CHECK(std::abs(s - d.value()) / s <= std::ldexp(1.0, -14));
    CHECK(d.value() >= s);  // mantissa rounds upward
  }
  CHECK(code_of([] { to_dyadic(1e300, 15); }) == Errc::kScaleOverflow);
  CHECK(code_of([] { to_dyadic(1e-300, 15); }) == Errc::kScaleOverflow);
  CHECK(code_of([] { to_dyadic(0.0, 15); }) == Errc::kScaleOverflow);
}

TEST_CASE("quantize worked examples") {
  const float zeros[3] = {0.0f, 0.0f, 0.0f};
  const QuantizedTensor z = quantize(zeros, {3}, 1.0, 8);
  CHECK(z.data == std::vector<std::int32_t>{0, 0, 0});

  const float a[1] = {0.635f};
  CHECK(quantize(a, {1}, 1.27, 8).data[0] == 64);  // 63.75 rounds away

  const float b[1] = {10.0f};
  CHECK(quantize(b, {1}, 1.27, 8).data[0] == 127);  // clipped then saturated

  const float bad[1] = {std::numeric_limits<float>::quiet_NaN()};
  CHECK(code_of([&] { quantize(bad, {1}, 1.0, 8); }) == Errc::kInvalidInput);
  const float ok[1] = {1.0f};
  CHECK(code_of([&] { quantize(ok, {1}, 0.0, 8); }) == Errc::kInvalidThreshold);
}

TEST_CASE("quantize odd symmetry and monotonicity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<float> x(512);
  for (auto& v : x) v = static_cast<float>(dist(rng));
  std::vector<float> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];

  for (int k : {8, 16}) {
    const QuantizedTensor qp = quantize(x, {512}, 2.0, k);
    const QuantizedTensor qn = quantize(neg, {512}, 2.0, k);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(qn.data[i] == -qp.data[i]);
  }

  std::vector<float> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const QuantizedTensor qs = quantize(sorted, {512}, 2.0, 8);
  for (std::size_t i = 1; i < sorted.size(); ++i)
    CHECK(qs.data[i] >= qs.data[i - 1]);
}

TEST_CASE("dequantize and round trip") {
  QuantizedTensor q;
  q.data = {0};
  q.shape = {1};
  q.width = 8;
  q.scale = to_dyadic(1.0);
  CHECK(dequantize(q)[0] == 0.0);

  const float v[1] = {0.635f};
  const QuantizedTensor one = quantize(v, {1}, 1.27, 8);
  CHECK(dequantize(one)[0] == doctest::Approx(0.6375).epsilon(1e-3));

  std::mt19937_64 rng(13);
  for (int k : {8, 16}) {
    std::uniform_real_distribution<double> mdist(0.05, 50.0);
    for (int trial = 0; trial < 200; ++trial) {
      const double m = mdist(rng);
      const double s = scale_from_threshold(m, k);
      std::uniform_real_distribution<double> xdist(-m, m);
      std::vector<float> x(64);
      for (auto& e : x) e = static_cast<float>(xdist(rng));
      const QuantizedTensor q2 = quantize(x, {64}, m, k);
      const std::vector<double> back = dequantize(q2);
      for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(back[i] - x[i]) <= s / 2 + s * std::ldexp(1.0, -14));
    }
  }
}

TEST_CASE("observer initialization folds zero") {
  RangeObserver obs(0.05);
  const float batch[4] = {-2.0f, 1.0f, 3.0f, 0.5f};
  obs.observe(batch);
  CHECK(obs.min() == -2.0);
  CHECK(obs.max() == 3.0);

  RangeObserver positive(0.05);
  const float pos[2] = {1.0f, 2.0f};
  positive.observe(pos);
  CHECK(positive.min() == 0.0);  // zero folded in
  CHECK(positive.max() == 2.0);
}

TEST_CASE("observer EMA update") {
  RangeObserver obs(0.05);
  const float first[2] = {-1.0f, 1.0f};
  obs.observe(first);
  const float second[2] = {-2.0f, 3.0f};
  obs.observe(second);
  CHECK(obs.min() == doctest::Approx(-1.05).epsilon(1e-12));
  CHECK(obs.max() == doctest::Approx(1.10).epsilon(1e-12));
  CHECK(obs.threshold() == doctest::Approx(1.10).epsilon(1e-12));

  // Constant zero decays the range geometrically.
  const float zero[1] = {0.0f};
  obs.observe(zero);
  CHECK(obs.min() == doctest::Approx(-1.05 * 0.95).epsilon(1e-12));
  CHECK(obs.max() == doctest::Approx(1.10 * 0.95).epsilon(1e-12));
}

TEST_CASE("observer freeze and degenerate threshold") {
  RangeObserver obs(0.05);
  CHECK(code_of([&] { obs.threshold(); }) == Errc::kNotCalibrated);

  const float batch[2] = {-3.0f, 2.0f};
  obs.observe(batch);
  CHECK(obs.threshold() == 3.0);

  obs.freeze();
  CHECK(code_of([&] { obs.observe(batch); }) == Errc::kFrozenObserver);

  RangeObserver zero_obs(0.05);
  const float zeros[2] = {0.0f, 0.0f};
  zero_obs.observe(zeros);
  CHECK(zero_obs.threshold() == std::ldexp(1.0, -20));
}

TEST_CASE("observer contraction") {
  RangeObserver obs(0.1);
  const float wide[2] = {-8.0f, 9.0f};
  obs.observe(wide);
  const float steady[2] = {-1.0f, 2.0f};
  for (int i = 0; i < 300; ++i) obs.observe(steady);
  CHECK(obs.min() == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(obs.max() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("dyadic_apply") {
  const std::int64_t zero[1] = {0};
  CHECK(dyadic_apply(zero, {3, 5})[0] == 0);

  const std::int64_t hundred[1] = {100};
  CHECK(dyadic_apply(hundred, {16384, 16})[0] == 25);

  const std::int64_t neg[1] = {-3};
  CHECK(dyadic_apply(neg, {1, 1})[0] == -2);  // floor of -1.5

  const std::int64_t big[1] = {std::int64_t{1} << 55};
  CHECK(code_of([&] {
          dyadic_apply(big, {std::int64_t{1} << 14, 10});
        }) == Errc::kOverflow);
}

TEST_CASE("unit_step") {
  CHECK(unit_step(to_dyadic(0.03125)) == 32);
  CHECK(unit_step(to_dyadic(1.0)) == 1);
  CHECK(unit_step(to_dyadic(0.221283)) == 5);  // round(4.519)
  CHECK(unit_step(to_dyadic(8.0)) == 1);       // clamped at 1
}

TEST_CASE("requantize") {
  QuantizedTensor acc;
  acc.shape = {1};
  acc.width = 32;

  acc.data = {1000};
  const QuantizedTensor same = requantize(acc, 0.5, 0.5, 16);
  CHECK(same.data[0] == 1000);  // ratio 1 is exact

  const QuantizedTensor quarter = requantize(acc, 0.125, 0.5, 16);
  CHECK(quarter.data[0] == 250);

  acc.data = {70000};
  CHECK(requantize(acc, 1.0, 1.0, 8).data[0] == 127);  // saturated
}

TEST_CASE("dyadic_mul and dyadic_ratio bounds") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> logs(-12.0, 2.0);
  for (int i = 0; i < 3000; ++i) {
    const DyadicScale a = to_dyadic(std::exp2(logs(rng)));
    const DyadicScale b = to_dyadic(std::exp2(logs(rng)));
    const DyadicScale prod = dyadic_mul(a, b);
    const double pv = a.value() * b.value();
    CHECK(std::abs(prod.value() - pv) / pv <= std::ldexp(1.0, -13));
    CHECK(prod.value() >= pv);

    const DyadicScale ratio = dyadic_ratio(a, b);
    const double rv = a.value() / b.value();
    CHECK(std::abs(ratio.value() - rv) / rv <= std::ldexp(1.0, -13));
    CHECK(ratio.value() >= rv);
  }
  // ratio of a scale with itself is exactly one
  const DyadicScale s = to_dyadic(0.0123);
  const DyadicScale one = dyadic_ratio(s, s);
  CHECK(one.value() == 1.0);
}

TEST_CASE("quantize determinism") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  std::vector<float> x(256);
  for (auto& v : x) v = static_cast<float>(dist(rng));
  const QuantizedTensor a = quantize(x, {256}, 3.0, 8);
  const QuantizedTensor b = quantize(x, {256}, 3.0, 8);
  CHECK(a.data == b.data);
  CHECK(a.scale == b.scale);
}
