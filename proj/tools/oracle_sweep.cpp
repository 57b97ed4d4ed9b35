// Measures worst-case kernel-vs-reference errors and model-level similarity
// floors on seeded random inputs. The printed maxima/minima are the source
// of the constants in include/iseg/tolerances.hpp.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "iseg/calib.hpp"
#include "iseg/intkernels.hpp"
#include "iseg/model.hpp"
#include "iseg/qcore.hpp"
#include "iseg/reference.hpp"
#include "iseg/synth.hpp"

using namespace iseg;

namespace {

std::mt19937_64 rng(0xfeedbead);

double uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::int64_t randint(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

DyadicScale random_scale(double lo_log2, double hi_log2) {
  return to_dyadic(std::exp2(uniform(lo_log2, hi_log2)));
}

void sweep_shift_exp() {
  // Relative error on fine scales (the design envelope, 1/S >= 16) and
  // absolute error over the full scale range including coarse sites.
  double worst_rel = 0.0, worst_abs = 0.0;
  for (int trial = 0; trial < 40000; ++trial) {
    const bool fine = trial % 2 == 0;
    const DyadicScale s = fine ? random_scale(-10, -4) : random_scale(-10, -2);
    const double sv = s.value();
    const double target = uniform(-16.0, 0.0);
    const std::int64_t i_delta = std::llround(target / sv);
    if (i_delta > 0) continue;
    const std::int64_t arr[1] = {i_delta};
    const ExpResult e = shift_exp(arr, s, 23, 6);
    const double approx = e.s_exp.value() * static_cast<double>(e.i_exp[0]);
    const double truth = std::exp(sv * static_cast<double>(i_delta));
    if (fine) worst_rel = std::max(worst_rel, std::abs(approx - truth) / truth);
    worst_abs = std::max(worst_abs, std::abs(approx - truth));
  }
  std::printf("shift_exp max rel error (S <= 2^-4): %.6f\n", worst_rel);
  std::printf("shift_exp max abs error (S <= 2^-2): %.6f\n", worst_abs);
}

void sweep_int_div() {
  double worst = 0.0;
  for (int trial = 0; trial < 30000; ++trial) {
    const int k_out = (trial % 3 == 0) ? 8 : (trial % 3 == 1 ? 15 : 16);
    const std::int64_t den = randint(1, (std::int64_t{1} << (32 - k_out)) - 1);
    const std::int64_t num = randint(0, den);
    const std::int64_t arr[1] = {num};
    const DivResult r = int_div(arr, den, k_out);
    const double approx = r.s_div.value() * r.q[0];
    const double truth = static_cast<double>(num) / static_cast<double>(den);
    worst = std::max(worst, std::abs(approx - truth));
  }
  std::printf("int_div max abs error (den < 2^(32-k_out)): %.6f\n", worst);
}

void sweep_gelu() {
  double worst = 0.0;
  GeluConfig cfg;  // lambda 6, k_inter 23, k_out 16
  for (int trial = 0; trial < 4000; ++trial) {
    const std::int64_t n = randint(4, 64);
    QuantizedTensor x;
    x.shape = {1, n};
    x.width = 8;
    x.scale = random_scale(-6, -3.5);  // values up to ~11
    x.data.resize(n);
    for (auto& v : x.data) v = static_cast<std::int32_t>(randint(-127, 127));
    const QuantizedTensor raw = lambda_shift_gelu(x, cfg);
    const double sx = x.scale.value();
    const double sr = raw.scale.value();
    for (std::int64_t i = 0; i < n; ++i) {
      const double truth = gelu_sigmoid(sx * x.data[i]);
      worst = std::max(worst, std::abs(sr * raw.data[i] - truth));
    }
  }
  std::printf("lambda_shift_gelu max abs error: %.6f\n", worst);
}

void sweep_shiftmax() {
  double worst = 0.0;
  for (int trial = 0; trial < 4000; ++trial) {
    const std::int64_t n = randint(2, 64);
    QuantizedTensor x;
    x.shape = {1, n};
    x.width = 16;
    x.scale = random_scale(-8, -2);
    x.data.resize(n);
    for (auto& v : x.data)
      v = static_cast<std::int32_t>(randint(-2000, 2000));
    const QuantizedTensor out = shiftmax(x, 15, 15);
    TensorF xf = dequantize_f(x);
    const TensorF ref = softmax_ref(xf);
    const double so = out.scale.value();
    for (std::int64_t i = 0; i < n; ++i)
      worst = std::max(worst,
                       std::abs(so * out.data[i] - double(ref.data[i])));
  }
  std::printf("shiftmax max abs error: %.6f\n", worst);
}

void sweep_layernorm() {
  double worst = 0.0;
  for (int trial = 0; trial < 3000; ++trial) {
    const std::int64_t d = 16 << (trial % 3);
    QuantizedTensor x;
    x.shape = {2, d};
    x.width = 16;
    x.scale = random_scale(-9, -5);
    x.data.resize(2 * d);
    for (auto& v : x.data)
      v = static_cast<std::int32_t>(randint(-20000, 20000));

    std::vector<float> gamma(d), beta(d);
    for (auto& g : gamma) g = static_cast<float>(uniform(0.5, 1.5));
    for (auto& b : beta) b = static_cast<float>(uniform(-0.5, 0.5));
    LayerNormParams params;
    params.gamma = quantize_weight(gamma, {d});
    params.beta = quantize_bias(
        beta, {d},
        DyadicScale{params.gamma.scale.b, params.gamma.scale.c + kNormShift});

    TensorF xf = dequantize_f(x);
    // Compare against the float norm using the integer-quantized parameters.
    TensorF gq = dequantize_f(params.gamma);
    std::vector<float> bq(d);
    const double bs = params.beta.scale.value();
    for (std::int64_t i = 0; i < d; ++i)
      bq[i] = static_cast<float>(params.beta.data[i] * bs);
    const TensorF ref = layernorm_ref(xf, gq.data, bq);

    double absmax = 0.0;
    for (float v : ref.data) absmax = std::max(absmax, std::abs((double)v));
    const DyadicScale out_scale =
        to_dyadic(scale_from_threshold(std::max(absmax, 1e-3) * 1.05, 8));
    const QuantizedTensor out = i_layernorm(x, params, out_scale, 8);
    const double so = out.scale.value();
    for (std::int64_t i = 0; i < 2 * d; ++i)
      worst = std::max(worst,
                       std::abs(so * out.data[i] - double(ref.data[i])));
  }
  std::printf("i_layernorm max abs error: %.6f\n", worst);
}

void sweep_linear() {
  double worst_units = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t m = randint(1, 8), k = randint(1, 64), n = randint(1, 32);
    QuantizedTensor x, w;
    x.shape = {m, k};
    x.width = 8;
    x.scale = random_scale(-7, -3);
    x.data.resize(m * k);
    for (auto& v : x.data) v = static_cast<std::int32_t>(randint(-127, 127));
    w.shape = {k, n};
    w.width = 8;
    w.scale = random_scale(-9, -5);
    w.data.resize(k * n);
    for (auto& v : w.data) v = static_cast<std::int32_t>(randint(-127, 127));

    std::vector<float> bias_f(n);
    for (auto& b : bias_f) b = static_cast<float>(uniform(-1.0, 1.0));
    const DyadicScale combined = dyadic_mul(x.scale, w.scale);
    const QuantizedTensor bias = quantize_bias(bias_f, {n}, combined);

    // Float reference on dequantized operands.
    TensorF xf = dequantize_f(x), wf = dequantize_f(w);
    std::vector<double> ref(m * n, 0.0);
    const double bscale = combined.value();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        double acc = bias.data[j] * bscale;
        for (std::int64_t t = 0; t < k; ++t)
          acc += double(xf.data[i * k + t]) * wf.data[t * n + j];
        ref[i * n + j] = acc;
      }
    double absmax = 1e-6;
    for (double v : ref) absmax = std::max(absmax, std::abs(v));
    const DyadicScale out_scale =
        to_dyadic(scale_from_threshold(absmax * 1.05, 16));
    const QuantizedTensor out = linear(x, w, bias, out_scale, 16);
    const double so = out.scale.value();
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst_units =
          std::max(worst_units, std::abs(so * out.data[i] - ref[i]) / so);
  }
  std::printf("linear max error (output-scale units): %.6f\n", worst_units);
}

void sweep_residual() {
  double worst_units = 0.0;
  for (int trial = 0; trial < 3000; ++trial) {
    const std::int64_t n = randint(1, 256);
    QuantizedTensor a, b;
    a.shape = b.shape = {n};
    a.width = b.width = 16;
    a.scale = random_scale(-9, -5);
    b.scale = random_scale(-9, -5);
    a.data.resize(n);
    b.data.resize(n);
    for (auto& v : a.data) v = static_cast<std::int32_t>(randint(-30000, 30000));
    for (auto& v : b.data) v = static_cast<std::int32_t>(randint(-30000, 30000));
    const double sa = a.scale.value(), sb = b.scale.value();
    double absmax = 1e-6;
    for (std::int64_t i = 0; i < n; ++i)
      absmax = std::max(absmax, std::abs(sa * a.data[i] + sb * b.data[i]));
    const DyadicScale out_scale =
        to_dyadic(scale_from_threshold(absmax * 1.05, 16));
    const QuantizedTensor out = residual_add(a, b, out_scale);
    const double so = out.scale.value();
    for (std::int64_t i = 0; i < n; ++i) {
      const double ref = sa * a.data[i] + sb * b.data[i];
      worst_units = std::max(worst_units, std::abs(so * out.data[i] - ref) / so);
    }
  }
  std::printf("residual_add max error (output-scale units): %.6f\n",
              worst_units);
}

void sweep_model() {
  double min_cosine = 1.0, min_agree = 1.0, min_token_cos = 1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ModelConfig config;
    config.embed_dim = 32;
    config.enc_depth = 2;
    config.heads = 1;
    config.classes = 4;
    const Checkpoint fp32 = make_random_checkpoint(config, seed);

    SynthSpec spec;
    spec.n = 3;
    spec.classes = 4;
    spec.seed = seed + 100;
    std::vector<TensorF> images;
    for (int i = 0; i < spec.n; ++i)
      images.push_back(synth_sample(spec, i).image);

    CalibrationPlan plan;
    const Checkpoint intck = calibrate(fp32, {images[0]}, plan);  // one-shot

    for (const TensorF& image : images) {
      const Fp32Result ref = fp32_forward(image, fp32, Fp32Variant{});
      const ForwardResult got = forward(quantize_input(image, intck), intck,
                                        nullptr, nullptr);
      min_cosine =
          std::min(min_cosine, logit_cosine(dequantize_f(got.logits), ref.logits));
      min_agree = std::min(min_agree, agreement(got.class_map, ref.class_map));

      // Encoder-output token similarity.
      const QuantizedTensor tokens =
          patch_embed(quantize_input(image, intck), intck, nullptr);
      const QuantizedTensor z = encoder_forward(tokens, intck, nullptr);
      min_token_cos = std::min(
          min_token_cos, logit_cosine(dequantize_f(z), ref.encoder_out));
    }
  }
  std::printf("one-shot logit cosine min over seeds: %.6f\n", min_cosine);
  std::printf("one-shot map agreement min over seeds: %.6f\n", min_agree);
  std::printf("encoder token cosine min over seeds: %.6f\n", min_token_cos);
}

}  // namespace

int main() {
  sweep_shift_exp();
  sweep_int_div();
  sweep_gelu();
  sweep_shiftmax();
  sweep_layernorm();
  sweep_linear();
  sweep_residual();
  sweep_model();
  return 0;
}
