#include "iseg/intkernels.hpp"

#include <algorithm>
#include <bit>
#include <limits>

namespace iseg {

void validate(const GeluConfig& cfg) {
  if (cfg.lambda < 1) fail(Errc::kBadArgument, "lambda must be >= 1");
  if (cfg.k_inter < 8 || cfg.k_inter > 30)
    fail(Errc::kBadArgument, "k_inter out of range");
  if (cfg.k_out != 8 && cfg.k_out != 16)
    fail(Errc::kBadArgument, "gelu k_out must be 8 or 16");
}

ExpResult shift_exp(std::span<const std::int64_t> i_delta,
                    const DyadicScale& s, int k_inter, int lambda) {
  if (lambda < 1) fail(Errc::kBadArgument, "lambda must be >= 1");
  if (s.c + k_inter > kMaxDyadicShift)
    fail(Errc::kScaleOverflow, "exponential output scale underflows");

  const std::int64_t i0 = unit_step(s);
  const std::int64_t bound = -static_cast<std::int64_t>(lambda) * k_inter * i0;

  ExpResult out;
  out.s_exp = {s.b, s.c + k_inter};
  out.i_exp.resize(i_delta.size());
  for (std::size_t i = 0; i < i_delta.size(); ++i) {
    const std::int64_t v = i_delta[i];
    // I * log2(e), log2(e) realized as 1 + 1/2 - 1/16.
    std::int64_t ie = v + (v >> 1) - (v >> 4);
    ie = std::max(ie, bound);
    const std::int64_t q = floor_div(ie, -i0);
    const std::int64_t r = -(ie + q * i0);           // in [0, i0)
    const std::int64_t ib = ((-r) >> 1) + i0;        // 2^(-r/i0) ~ 1 - r/(2*i0)
    // q > k_inter turns the left shift negative; it becomes an arithmetic
    // right shift, so deep tails underflow to zero instead of sticking at
    // the mantissa floor.
    const std::int64_t shift = k_inter - q;
    if (shift >= 0) {
      if (shift > 62 ||
          ib > (std::numeric_limits<std::int64_t>::max() >> shift))
        fail(Errc::kOverflow, "shift_exp result exceeds 64 bits");
      out.i_exp[i] = ib << shift;
    } else {
      out.i_exp[i] = (-shift >= 63) ? 0 : (ib >> -shift);
    }
  }
  return out;
}

DyadicScale div_scale(int k_out, int p) {
  return {std::int64_t{1} << (p - 1), (p - 1) + (k_out - 1)};
}

namespace {

std::int32_t int_div_one(std::int64_t num, std::int64_t den, int k_out) {
  if (den <= 0 || den >= (std::int64_t{1} << 31))
    fail(Errc::kDivisionDomain, "denominator must be in (0, 2^31)");
  if (num < 0) fail(Errc::kInvalidInput, "negative numerator");
  if (num >= (std::int64_t{1} << 32))
    fail(Errc::kOverflow, "numerator too wide for reciprocal product");
  const std::int64_t recip = (std::int64_t{1} << 31) / den;
  const std::int64_t q = (recip * num) >> (31 - (k_out - 1));
  return static_cast<std::int32_t>(std::min(q, qmax(k_out)));
}

}  // namespace

DivResult int_div(std::span<const std::int64_t> num,
                  std::span<const std::int64_t> den, int k_out) {
  if (num.size() != den.size())
    fail(Errc::kShapeMismatch, "int_div operand sizes differ");
  DivResult out;
  out.s_div = div_scale(k_out);
  out.q.resize(num.size());
  for (std::size_t i = 0; i < num.size(); ++i)
    out.q[i] = int_div_one(num[i], den[i], k_out);
  return out;
}

DivResult int_div(std::span<const std::int64_t> num, std::int64_t den,
                  int k_out) {
  DivResult out;
  out.s_div = div_scale(k_out);
  out.q.resize(num.size());
  for (std::size_t i = 0; i < num.size(); ++i)
    out.q[i] = int_div_one(num[i], den, k_out);
  return out;
}

QuantizedTensor int_matmul(const QuantizedTensor& a, const QuantizedTensor& b,
                           TraceMeters* meters, LayerKind kind) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    fail(Errc::kShapeMismatch, "int_matmul expects rank-2 operands");
  const std::int64_t m = a.shape[0], k = a.shape[1];
  const std::int64_t k2 = b.shape[0], n = b.shape[1];
  if (k != k2) fail(Errc::kShapeMismatch, "int_matmul inner dims differ");
  if (k > (std::int64_t{1} << 16))
    fail(Errc::kOverflow, "inner dimension too large for INT32 accumulation");
  if (k * qmax(a.width) * qmax(b.width) >= (std::int64_t{1} << 31))
    fail(Errc::kOverflow, "accumulator may exceed INT32");

  QuantizedTensor out;
  out.shape = {m, n};
  out.width = 32;
  out.scale = dyadic_mul(a.scale, b.scale);
  out.data.assign(static_cast<std::size_t>(m * n), 0);
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int32_t* arow = a.data.data() + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      std::int64_t acc = 0;
      for (std::int64_t t = 0; t < k; ++t)
        acc += static_cast<std::int64_t>(arow[t]) * b.data[t * n + j];
      out.data[i * n + j] = static_cast<std::int32_t>(acc);
    }
  }
  meter_matmul(meters, kind, m, k, n, a.width, b.width, 0, out.width);
  return out;
}

QuantizedTensor linear(const QuantizedTensor& x, const QuantizedTensor& w,
                       const QuantizedTensor& bias,
                       const DyadicScale& out_scale, int k_out,
                       TraceMeters* meters, LayerKind kind) {
  if (x.shape.size() != 2 || w.shape.size() != 2)
    fail(Errc::kShapeMismatch, "linear expects rank-2 operands");
  const std::int64_t m = x.shape[0], k = x.shape[1], n = w.shape[1];
  if (w.shape[0] != k) fail(Errc::kShapeMismatch, "linear inner dims differ");

  const DyadicScale combined = dyadic_mul(x.scale, w.scale);
  const bool has_bias = !bias.data.empty();
  if (has_bias) {
    if (bias.size() != n) fail(Errc::kShapeMismatch, "bias length mismatch");
    if (!(bias.scale == combined))
      fail(Errc::kCheckpointInconsistency,
           "bias scale does not equal S_x * S_w");
  }

  std::vector<std::int64_t> acc(static_cast<std::size_t>(m * n), 0);
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int32_t* xrow = x.data.data() + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      std::int64_t s = has_bias ? bias.data[j] : 0;
      for (std::int64_t t = 0; t < k; ++t)
        s += static_cast<std::int64_t>(xrow[t]) * w.data[t * n + j];
      acc[i * n + j] = s;
    }
  }
  meter_matmul(meters, kind, m, k, n, x.width, w.width, has_bias ? 32 : 0,
               k_out);
  return requantize_dyadic(acc, {m, n}, combined, out_scale, k_out);
}

QuantizedTensor residual_add(const QuantizedTensor& a,
                             const QuantizedTensor& b,
                             const DyadicScale& out_scale) {
  if (a.shape != b.shape) fail(Errc::kShapeMismatch, "residual shapes differ");
  // b is brought to a's scale, summed in INT32, then requantized to INT16.
  const DyadicScale ratio = dyadic_ratio(b.scale, a.scale);
  std::vector<std::int64_t> rescaled =
      dyadic_apply(std::span<const std::int32_t>(b.data), ratio);
  for (std::size_t i = 0; i < rescaled.size(); ++i) {
    rescaled[i] += a.data[i];
    if (rescaled[i] > std::numeric_limits<std::int32_t>::max() ||
        rescaled[i] < std::numeric_limits<std::int32_t>::min())
      fail(Errc::kOverflow, "residual accumulator exceeds INT32");
  }
  return requantize_dyadic(rescaled, a.shape, a.scale, out_scale, 16);
}

namespace {

// Shared GELU core; `lambda` has already been chosen by the entry point.
QuantizedTensor shift_gelu_core(const QuantizedTensor& x,
                                const GeluConfig& cfg, int lambda) {
  validate(cfg);
  if (x.shape.empty()) fail(Errc::kShapeMismatch, "gelu input needs a shape");
  const std::int64_t d = x.shape.back();
  if (d <= 0) fail(Errc::kShapeMismatch, "empty feature axis");
  const std::int64_t rows = numel(x.shape) / d;

  // 1.702 * I as I + I/2 + I/8 + I/16.
  std::vector<std::int64_t> ip(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const std::int64_t v = x.data[i];
    ip[i] = v + (v >> 1) + (v >> 3) + (v >> 4);
  }

  // Row maxima over the feature axis; clamped at zero so both exponential
  // arguments stay non-positive even for all-negative rows.
  std::vector<std::int64_t> delta(ip.size());
  std::vector<std::int64_t> neg_max(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t mx = 0;
    for (std::int64_t j = 0; j < d; ++j)
      mx = std::max(mx, ip[r * d + j]);
    neg_max[r] = -mx;
    for (std::int64_t j = 0; j < d; ++j) delta[r * d + j] = ip[r * d + j] - mx;
  }

  const ExpResult e = shift_exp(delta, x.scale, cfg.k_inter, lambda);
  const ExpResult e_max = shift_exp(neg_max, x.scale, cfg.k_inter, lambda);

  QuantizedTensor out;
  out.shape = x.shape;
  out.width = 32;
  out.scale = dyadic_mul(x.scale, div_scale(cfg.k_out));
  out.data.resize(x.data.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t j = 0; j < d; ++j) {
      const std::size_t i = static_cast<std::size_t>(r * d + j);
      std::int64_t num = e.i_exp[i];
      std::int64_t den = num + e_max.i_exp[static_cast<std::size_t>(r)];
      if (den == 0) {  // both exponentials underflowed
        out.data[i] = 0;
        continue;
      }
      // Keep the denominator inside the reciprocal's accurate range.
      const int excess = std::bit_width(static_cast<std::uint64_t>(den)) -
                         (32 - cfg.k_out);
      if (excess > 0) {
        num >>= excess;
        den >>= excess;
      }
      const std::int64_t div = int_div_one(num, den, cfg.k_out);
      out.data[i] = static_cast<std::int32_t>(x.data[i] * div);
    }
  }
  return out;
}

}  // namespace

QuantizedTensor lambda_shift_gelu(const QuantizedTensor& x,
                                  const GeluConfig& cfg) {
  return shift_gelu_core(x, cfg, cfg.lambda);
}

QuantizedTensor shift_gelu_baseline(const QuantizedTensor& x,
                                    const GeluConfig& cfg) {
  return shift_gelu_core(x, cfg, 1);
}

QuantizedTensor shiftmax(const QuantizedTensor& x, int k_inter, int k_out,
                         int lambda) {
  if (x.shape.empty()) fail(Errc::kShapeMismatch, "shiftmax input needs a shape");
  const std::int64_t n = x.shape.back();
  if (n <= 0) fail(Errc::kShapeMismatch, "empty softmax row");
  if (k_out < 2 || k_out > 16) fail(Errc::kBadArgument, "k_out out of range");
  const std::int64_t rows = numel(x.shape) / n;

  std::vector<std::int64_t> delta(x.data.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t mx = x.data[r * n];
    for (std::int64_t j = 1; j < n; ++j)
      mx = std::max<std::int64_t>(mx, x.data[r * n + j]);
    for (std::int64_t j = 0; j < n; ++j)
      delta[r * n + j] = static_cast<std::int64_t>(x.data[r * n + j]) - mx;
  }

  const ExpResult e = shift_exp(delta, x.scale, k_inter, lambda);

  QuantizedTensor out;
  out.shape = x.shape;
  out.width = 16;
  out.scale = div_scale(k_out);
  out.data.resize(x.data.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t sum = 0;
    for (std::int64_t j = 0; j < n; ++j) sum += e.i_exp[r * n + j];
    const int excess =
        std::bit_width(static_cast<std::uint64_t>(sum)) - (32 - k_out);
    const int g = std::max(excess, 0);
    // Summing the shifted terms keeps each numerator <= the denominator.
    std::int64_t den = 0;
    for (std::int64_t j = 0; j < n; ++j) den += e.i_exp[r * n + j] >> g;
    for (std::int64_t j = 0; j < n; ++j)
      out.data[r * n + j] = int_div_one(e.i_exp[r * n + j] >> g, den, k_out);
  }
  return out;
}

QuantizedTensor i_layernorm(const QuantizedTensor& x,
                            const LayerNormParams& params,
                            const DyadicScale& out_scale, int k_out) {
  if (x.shape.empty()) fail(Errc::kShapeMismatch, "layernorm input needs a shape");
  const std::int64_t d = x.shape.back();
  if (params.gamma.size() != d || params.beta.size() != d)
    fail(Errc::kShapeMismatch, "layernorm parameter length mismatch");
  const DyadicScale beta_scale =
      DyadicScale{params.gamma.scale.b, params.gamma.scale.c + kNormShift};
  if (!(params.beta.scale == beta_scale))
    fail(Errc::kCheckpointInconsistency,
         "beta scale does not equal S_gamma * 2^-h");
  const std::int64_t rows = numel(x.shape) / d;

  std::vector<std::int64_t> acc(x.data.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int32_t* row = x.data.data() + r * d;
    std::int64_t sum = 0;
    for (std::int64_t j = 0; j < d; ++j) sum += row[j];
    const std::int64_t mu = floor_div(sum, d);
    std::int64_t sq = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const std::int64_t c = row[j] - mu;
      sq += c * c;
    }
    const std::int64_t var = sq / d;
    const std::int64_t sigma =
        std::max<std::int64_t>(static_cast<std::int64_t>(integer_isqrt(
                                   static_cast<std::uint64_t>(var))),
                               1);
    for (std::int64_t j = 0; j < d; ++j) {
      const std::int64_t c = row[j] - mu;
      const std::int64_t norm = floor_div(c << kNormShift, sigma);
      acc[r * d + j] =
          static_cast<std::int64_t>(params.gamma.data[j]) * norm +
          params.beta.data[j];
    }
  }
  return requantize_dyadic(acc, x.shape, beta_scale, out_scale, k_out);
}

std::uint64_t integer_isqrt(std::uint64_t v) {
  if (v < 2) return v;
  std::uint64_t x = std::uint64_t{1}
                    << ((std::bit_width(v) + 1) / 2);  // x >= sqrt(v)
  while (true) {
    const std::uint64_t y = (x + v / x) / 2;
    if (y >= x) return x;
    x = y;
  }
}

QuantizedTensor nearest_upsample(const QuantizedTensor& q, std::int64_t out_h,
                                 std::int64_t out_w) {
  if (q.shape.size() != 3) fail(Errc::kShapeMismatch, "expected [H x W x C]");
  const std::int64_t h = q.shape[0], w = q.shape[1], ch = q.shape[2];
  if (h <= 0 || w <= 0 || ch <= 0) fail(Errc::kInvalidInput, "zero-size input");
  if (out_h < h || out_w < w)
    fail(Errc::kBadArgument, "output must not be smaller than input");

  QuantizedTensor out;
  out.shape = {out_h, out_w, ch};
  out.width = q.width;
  out.scale = q.scale;
  out.data.resize(static_cast<std::size_t>(out_h * out_w * ch));
  for (std::int64_t i = 0; i < out_h; ++i) {
    const std::int64_t si = i * h / out_h;
    for (std::int64_t j = 0; j < out_w; ++j) {
      const std::int64_t sj = j * w / out_w;
      const std::int32_t* src = q.data.data() + (si * w + sj) * ch;
      std::int32_t* dst = out.data.data() + (i * out_w + j) * ch;
      std::copy(src, src + ch, dst);
    }
  }
  return out;
}

}  // namespace iseg
