#pragma once

#include <span>
#include <vector>

#include "iseg/types.hpp"

namespace iseg {

// Default dyadic mantissa precision: mantissas fit 16 bits so every product
// against a 32-bit payload stays well inside 64 bits.
inline constexpr int kDyadicBits = 15;

// Largest shift a DyadicScale may carry; keeps (value * b) >> c in 64 bits.
inline constexpr int kMaxDyadicShift = 62;

// Clipping threshold substituted for an all-zero activation site so its
// scale stays positive.
inline const double kDegenerateThreshold = std::ldexp(1.0, -20);

// S = 2m / (2^k - 1), the step size of symmetric uniform quantization.
double scale_from_threshold(double m, int k);

// Nearest dyadic b/2^c with b in [2^(p-1), 2^p). The mantissa is rounded
// upward so the stored scale never undershoots S; relative error < 2^(1-p).
DyadicScale to_dyadic(double s, int p = kDyadicBits);

// (a.b * b.b) renormalized to p mantissa bits, rounding up.
DyadicScale dyadic_mul(const DyadicScale& a, const DyadicScale& b,
                       int p = kDyadicBits);

// num/den as a dyadic scale with p mantissa bits, rounding up. Pure integer.
DyadicScale dyadic_ratio(const DyadicScale& num, const DyadicScale& den,
                         int p = kDyadicBits);

// Element-wise (v * b) >> c with arithmetic (floor) shift semantics.
std::vector<std::int64_t> dyadic_apply(std::span<const std::int64_t> values,
                                       const DyadicScale& d);
std::vector<std::int64_t> dyadic_apply(std::span<const std::int32_t> values,
                                       const DyadicScale& d);

// round(1/S) for a dyadic S, computed in integer arithmetic; at least 1.
std::int64_t unit_step(const DyadicScale& s);

QuantizedTensor quantize(std::span<const float> values, Shape shape, double m,
                         int k, int p = kDyadicBits);

std::vector<double> dequantize(const QuantizedTensor& q);
TensorF dequantize_f(const QuantizedTensor& q);

// EMA min/max tracker for one activation site. The first observation seeds
// min/max directly with zero folded in; later observations blend with
// momentum alpha. The tracked range always covers zero.
class RangeObserver {
 public:
  explicit RangeObserver(double alpha = 0.05);

  void observe(std::span<const float> values);
  double threshold() const;
  void freeze() noexcept { frozen_ = true; }

  bool initialized() const noexcept { return initialized_; }
  bool frozen() const noexcept { return frozen_; }
  double min() const noexcept { return m_min_; }
  double max() const noexcept { return m_max_; }
  double alpha() const noexcept { return alpha_; }

 private:
  double m_min_ = 0.0;
  double m_max_ = 0.0;
  double alpha_;
  bool initialized_ = false;
  bool frozen_ = false;
};

// Rescale an integer accumulator from s_combined to s_out and saturate to
// k_out bits. Scale arithmetic here is real-valued; the integer inference
// path uses requantize_dyadic instead.
QuantizedTensor requantize(const QuantizedTensor& acc, double s_combined,
                           double s_out, int k_out, int p = kDyadicBits);

// Same rescale driven purely by stored dyadic scales.
QuantizedTensor requantize_dyadic(std::span<const std::int64_t> acc,
                                  Shape shape, const DyadicScale& s_combined,
                                  const DyadicScale& s_out, int k_out,
                                  int p = kDyadicBits);
QuantizedTensor requantize_dyadic(std::span<const std::int32_t> acc,
                                  Shape shape, const DyadicScale& s_combined,
                                  const DyadicScale& s_out, int k_out,
                                  int p = kDyadicBits);

}  // namespace iseg
