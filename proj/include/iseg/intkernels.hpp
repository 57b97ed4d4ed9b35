#pragma once

#include <span>
#include <vector>

#include "iseg/qcore.hpp"
#include "iseg/trace.hpp"
#include "iseg/types.hpp"

namespace iseg {

// Parameters of the shift-based integer GELU. lambda relaxes the lower
// clamp of the exponential argument; k_inter is the intermediate
// bit-precision; k_out the bit-precision of the integer division output.
struct GeluConfig {
  int lambda = 6;
  int k_inter = 23;
  int k_out = 16;
};

void validate(const GeluConfig& cfg);

// Integer exponential: s_exp * i_exp approximates e^(S * I) for I <= 0.
struct ExpResult {
  std::vector<std::int64_t> i_exp;
  DyadicScale s_exp;
};

// Base-2 shift exponential with a lambda-scaled lower clamp on the
// exponent. Inputs are expected max-shifted (<= 0); mildly positive inputs
// are handled by the same decomposition.
ExpResult shift_exp(std::span<const std::int64_t> i_delta,
                    const DyadicScale& s, int k_inter, int lambda);

// (floor(2^31 / den) * num) >> (31 - (k_out - 1)), saturated to
// 2^(k_out-1) - 1. Output scale is 2^-(k_out-1).
struct DivResult {
  std::vector<std::int32_t> q;
  DyadicScale s_div;
};
DivResult int_div(std::span<const std::int64_t> num,
                  std::span<const std::int64_t> den, int k_out);
DivResult int_div(std::span<const std::int64_t> num, std::int64_t den,
                  int k_out);

// Exact dyadic scale 2^-(k_out-1) carried by int_div outputs.
DyadicScale div_scale(int k_out, int p = kDyadicBits);

// A[MxK] * B[KxN] with exact products summed into 32-bit accumulators.
// Output width 32, scale = S_A * S_B.
QuantizedTensor int_matmul(const QuantizedTensor& a, const QuantizedTensor& b,
                           TraceMeters* meters = nullptr,
                           LayerKind kind = LayerKind::kMatMul);

// x[MxK] * w[KxN] + bias, requantized to (out_scale, k_out). The bias must
// be INT32 at scale S_x * S_w.
QuantizedTensor linear(const QuantizedTensor& x, const QuantizedTensor& w,
                       const QuantizedTensor& bias,
                       const DyadicScale& out_scale, int k_out,
                       TraceMeters* meters = nullptr,
                       LayerKind kind = LayerKind::kLinear);

// a + b on a common scale with an INT32 accumulator, requantized to INT16.
QuantizedTensor residual_add(const QuantizedTensor& a,
                             const QuantizedTensor& b,
                             const DyadicScale& out_scale);

// Shift-based integer GELU over the last axis. Returns the raw product
// I_x * I_div at scale S_x * 2^-(k_out-1), width 32; callers requantize to
// their site scale.
QuantizedTensor lambda_shift_gelu(const QuantizedTensor& x,
                                  const GeluConfig& cfg);

// The un-relaxed variant (clamp bound k_inter * (-I_0)); bit-identical to
// lambda_shift_gelu with lambda = 1.
QuantizedTensor shift_gelu_baseline(const QuantizedTensor& x,
                                    const GeluConfig& cfg);

// Integer softmax over the last axis; INT16 output at scale 2^-(k_out-1).
QuantizedTensor shiftmax(const QuantizedTensor& x, int k_inter, int k_out,
                         int lambda = 1);

// Per-feature affine parameters of the integer layer norm. beta must be
// INT32 at scale S_gamma * 2^-kNormShift.
struct LayerNormParams {
  QuantizedTensor gamma;
  QuantizedTensor beta;
};

// Fixed-point resolution of the normalized activations inside i_layernorm.
inline constexpr int kNormShift = 14;

// Integer layer norm over the last axis: integer mean and variance, integer
// square root, affine with gamma/beta, requantized to (out_scale, k_out).
QuantizedTensor i_layernorm(const QuantizedTensor& x,
                            const LayerNormParams& params,
                            const DyadicScale& out_scale, int k_out);

// floor(sqrt(v)) by Newton iteration on integers.
std::uint64_t integer_isqrt(std::uint64_t v);

// Nearest-neighbor upsampling of an [H x W x C] tensor by index flooring;
// payload and scale pass through untouched.
QuantizedTensor nearest_upsample(const QuantizedTensor& q, std::int64_t out_h,
                                 std::int64_t out_w);

}  // namespace iseg
