#include "iseg/qcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace iseg {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidThreshold: return "invalid-threshold";
    case Errc::kInvalidInput: return "invalid-input";
    case Errc::kFrozenObserver: return "frozen-observer";
    case Errc::kNotCalibrated: return "not-calibrated";
    case Errc::kScaleOverflow: return "scale-overflow";
    case Errc::kOverflow: return "overflow";
    case Errc::kDivisionDomain: return "division-domain";
    case Errc::kShapeMismatch: return "shape-mismatch";
    case Errc::kCheckpointInconsistency: return "checkpoint-inconsistency";
    case Errc::kModeMismatch: return "mode-mismatch";
    case Errc::kIoError: return "io-error";
    case Errc::kBadArgument: return "bad-argument";
  }
  return "unknown";
}

double scale_from_threshold(double m, int k) {
  if (!(m > 0.0) || !std::isfinite(m))
    fail(Errc::kInvalidThreshold, "clipping threshold must be positive");
  if (!valid_width(k)) fail(Errc::kBadArgument, "bit-width must be 8, 16 or 32");
  return 2.0 * m / (std::ldexp(1.0, k) - 1.0);
}

DyadicScale to_dyadic(double s, int p) {
  if (p < 2 || p > 30) fail(Errc::kBadArgument, "dyadic precision out of range");
  if (!(s > 0.0) || !std::isfinite(s))
    fail(Errc::kScaleOverflow, "scale must be positive and finite");

  int e = 0;
  std::frexp(s, &e);  // s = f * 2^e with f in [0.5, 1)
  int c = p - e;
  const double scaled = std::ldexp(s, c);  // in [2^(p-1), 2^p)
  std::int64_t b = static_cast<std::int64_t>(std::ceil(scaled));
  if (b == (std::int64_t{1} << p)) {
    b >>= 1;
    --c;
  }
  if (c < 0 || c > kMaxDyadicShift)
    fail(Errc::kScaleOverflow, "scale outside dyadic range");
  return {b, c};
}

namespace {

// Renormalize mantissa m (> 0) to p bits, rounding up; adjusts the shift.
DyadicScale normalize_mantissa(std::int64_t m, int c, int p) {
  const int bits = std::bit_width(static_cast<std::uint64_t>(m));
  if (bits > p) {
    const int s = bits - p;
    m = (m + (std::int64_t{1} << s) - 1) >> s;  // ceil
    c -= s;
    if (m == (std::int64_t{1} << p)) {
      m >>= 1;
      --c;
    }
  }
  if (c < 0 || c > kMaxDyadicShift)
    fail(Errc::kScaleOverflow, "scale outside dyadic range");
  return {m, c};
}

}  // namespace

DyadicScale dyadic_mul(const DyadicScale& a, const DyadicScale& b, int p) {
  if (a.is_zero() || b.is_zero()) return {0, 0};
  return normalize_mantissa(a.b * b.b, a.c + b.c, p);
}

DyadicScale dyadic_ratio(const DyadicScale& num, const DyadicScale& den, int p) {
  if (den.is_zero()) fail(Errc::kDivisionDomain, "zero denominator scale");
  if (num.is_zero()) return {0, 0};
  // value = (num.b / den.b) * 2^(den.c - num.c); bring the mantissa quotient
  // into [2^(p-1), 2^p) before dividing so one ceil-division suffices.
  const int sigma = (num.b >= den.b) ? (p - 1) : p;
  std::int64_t b = ((num.b << sigma) + den.b - 1) / den.b;  // ceil
  int c = sigma + num.c - den.c;
  if (b == (std::int64_t{1} << p)) {
    b >>= 1;
    --c;
  }
  if (c < 0 || c > kMaxDyadicShift)
    fail(Errc::kScaleOverflow, "scale ratio outside dyadic range");
  return {b, c};
}

namespace {

template <typename T>
std::vector<std::int64_t> dyadic_apply_impl(std::span<const T> values,
                                            const DyadicScale& d) {
  if (d.b < 0) fail(Errc::kBadArgument, "negative dyadic mantissa");
  std::vector<std::int64_t> out(values.size());
  if (d.b == 0) return out;
  const std::int64_t limit = std::numeric_limits<std::int64_t>::max() / d.b;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::int64_t v = values[i];
    if (v > limit || v < -limit)
      fail(Errc::kOverflow, "dyadic product exceeds 64 bits");
    out[i] = (v * d.b) >> d.c;  // arithmetic shift: floor for negatives
  }
  return out;
}

}  // namespace

std::vector<std::int64_t> dyadic_apply(std::span<const std::int64_t> values,
                                       const DyadicScale& d) {
  return dyadic_apply_impl(values, d);
}

std::vector<std::int64_t> dyadic_apply(std::span<const std::int32_t> values,
                                       const DyadicScale& d) {
  return dyadic_apply_impl(values, d);
}

std::int64_t unit_step(const DyadicScale& s) {
  if (s.is_zero()) fail(Errc::kDivisionDomain, "zero scale has no unit step");
  // round(2^c / b), round half away from zero; operands are positive.
  const unsigned __int128 num =
      (static_cast<unsigned __int128>(1) << (s.c + 1)) + static_cast<unsigned __int128>(s.b);
  const unsigned __int128 q = num / (2 * static_cast<unsigned __int128>(s.b));
  std::int64_t i0 = static_cast<std::int64_t>(q);
  return std::max<std::int64_t>(i0, 1);
}

QuantizedTensor quantize(std::span<const float> values, Shape shape, double m,
                         int k, int p) {
  if (!(m > 0.0) || !std::isfinite(m))
    fail(Errc::kInvalidThreshold, "clipping threshold must be positive");
  if (!valid_width(k)) fail(Errc::kBadArgument, "bit-width must be 8, 16 or 32");
  check_shape_data(shape, values.size(), "quantize");

  const double s = scale_from_threshold(m, k);
  const DyadicScale d = to_dyadic(s, p);
  const double sd = d.value();
  const std::int64_t hi = qmax(k);

  QuantizedTensor out;
  out.shape = std::move(shape);
  out.width = k;
  out.scale = d;
  out.data.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    if (!std::isfinite(x)) fail(Errc::kInvalidInput, "non-finite input element");
    const double clipped = std::clamp(x, -m, m);
    std::int64_t q = std::llround(clipped / sd);  // round half away from zero
    q = std::clamp(q, -hi, hi);
    out.data[i] = static_cast<std::int32_t>(q);
  }
  return out;
}

std::vector<double> dequantize(const QuantizedTensor& q) {
  const double s = q.scale.value();
  std::vector<double> out(q.data.size());
  for (std::size_t i = 0; i < q.data.size(); ++i) out[i] = q.data[i] * s;
  return out;
}

TensorF dequantize_f(const QuantizedTensor& q) {
  const double s = q.scale.value();
  TensorF out;
  out.shape = q.shape;
  out.data.resize(q.data.size());
  for (std::size_t i = 0; i < q.data.size(); ++i)
    out.data[i] = static_cast<float>(q.data[i] * s);
  return out;
}

RangeObserver::RangeObserver(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    fail(Errc::kBadArgument, "momentum must be in (0, 1]");
}

void RangeObserver::observe(std::span<const float> values) {
  if (frozen_) fail(Errc::kFrozenObserver, "observe on frozen observer");
  if (values.empty()) fail(Errc::kInvalidInput, "empty observation");

  double lo = values[0], hi = values[0];
  for (float v : values) {
    if (!std::isfinite(v)) fail(Errc::kInvalidInput, "non-finite observation");
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  if (!initialized_) {
    m_min_ = std::min(lo, 0.0);
    m_max_ = std::max(hi, 0.0);
    initialized_ = true;
    return;
  }
  m_min_ = alpha_ * lo + (1.0 - alpha_) * m_min_;
  m_max_ = alpha_ * hi + (1.0 - alpha_) * m_max_;
  // The symmetric range must keep covering zero even if the stream drifts
  // one-sided.
  m_min_ = std::min(m_min_, 0.0);
  m_max_ = std::max(m_max_, 0.0);
}

double RangeObserver::threshold() const {
  if (!initialized_) fail(Errc::kNotCalibrated, "observer never initialized");
  const double m = std::max(-m_min_, m_max_);
  return m > 0.0 ? m : kDegenerateThreshold;
}

QuantizedTensor requantize(const QuantizedTensor& acc, double s_combined,
                           double s_out, int k_out, int p) {
  if (!(s_combined > 0.0) || !(s_out > 0.0))
    fail(Errc::kScaleOverflow, "requantize scales must be positive");
  const DyadicScale ratio = to_dyadic(s_combined / s_out, p);
  const DyadicScale out_scale = to_dyadic(s_out, p);
  std::vector<std::int64_t> wide(acc.data.begin(), acc.data.end());
  return requantize_dyadic(wide, acc.shape, ratio, out_scale, k_out, p);
}

QuantizedTensor requantize_dyadic(std::span<const std::int32_t> acc,
                                  Shape shape, const DyadicScale& s_combined,
                                  const DyadicScale& s_out, int k_out, int p) {
  std::vector<std::int64_t> wide(acc.begin(), acc.end());
  return requantize_dyadic(std::span<const std::int64_t>(wide),
                           std::move(shape), s_combined, s_out, k_out, p);
}

QuantizedTensor requantize_dyadic(std::span<const std::int64_t> acc,
                                  Shape shape, const DyadicScale& s_combined,
                                  const DyadicScale& s_out, int k_out, int p) {
  if (!valid_width(k_out)) fail(Errc::kBadArgument, "bit-width must be 8, 16 or 32");
  const DyadicScale ratio = dyadic_ratio(s_combined, s_out, p);
  std::vector<std::int64_t> scaled = dyadic_apply(acc, ratio);
  const std::int64_t hi = qmax(k_out);

  QuantizedTensor out;
  out.shape = std::move(shape);
  out.width = k_out;
  out.scale = s_out;
  out.data.resize(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i)
    out.data[i] = static_cast<std::int32_t>(std::clamp(scaled[i], -hi, hi));
  return out;
}

}  // namespace iseg
