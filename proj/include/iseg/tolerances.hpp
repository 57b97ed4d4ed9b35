#pragma once

// Per-kernel tolerance constants and comparison thresholds, produced by the
// sweep in tools/oracle_sweep.cpp (run it to regenerate). Tolerances are the
// measured maxima plus a 25% margin; similarity floors are the measured
// minima minus the stated slack.

namespace iseg::tol {

// shift_exp vs e^(S*I), S*I in [-16, 0].
// Relative error on fine scales (1/S >= 16): measured 0.7103.
inline constexpr double kShiftExpRel = 0.89;
// Absolute error including coarse scales (S <= 2^-2): measured 0.2184.
inline constexpr double kShiftExpAbs = 0.28;

// |dequant(int_div) - num/den| with den < 2^(32-k_out): measured 0.0135.
inline constexpr double kIntDivAbs = 0.017;

// |dequant(gelu raw) - x*sigma(1.702x)|, INT8 inputs, S in [2^-6, 2^-3.5]:
// measured 0.2999.
inline constexpr double kGeluAbs = 0.38;

// |dequant(shiftmax) - softmax| per element, INT16 rows, k_out = 15:
// measured 0.0509.
inline constexpr double kShiftmaxAbs = 0.064;

// |dequant(i_layernorm) - layernorm| per element with quantized affine
// parameters: measured 0.0317.
inline constexpr double kLayerNormAbs = 0.040;

// |dequant(linear) - fp32 linear| in output-scale units: measured 3.97.
inline constexpr double kLinearUnits = 5.0;

// |dequant(residual_add) - fp32 add| in output-scale units: measured 11.33.
inline constexpr double kResidualUnits = 15.0;

// One-shot PTQ INT-vs-FP32 logit cosine on 5 seeded random toy models:
// measured minimum 0.98544, committed at minimum - 0.005.
inline constexpr double kOneShotLogitCosineMin = 0.9804;

// Encoder-output token cosine, same protocol: measured minimum 0.99966.
inline constexpr double kEncoderTokenCosineMin = 0.995;

// Per-pixel map agreement, same protocol: measured minimum 0.90625.
inline constexpr double kOneShotAgreementMin = 0.88;

}  // namespace iseg::tol
