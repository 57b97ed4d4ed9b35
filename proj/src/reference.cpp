#include "iseg/reference.hpp"

#include <algorithm>
#include <cmath>

namespace iseg {

double gelu_sigmoid(double x) { return x / (1.0 + std::exp(-1.702 * x)); }

double gelu_phi(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

TensorF gelu_ref(const TensorF& x) {
  TensorF out = x;
  for (float& v : out.data) v = static_cast<float>(gelu_sigmoid(v));
  return out;
}

TensorF softmax_ref(const TensorF& x) {
  const std::int64_t n = x.shape.back();
  const std::int64_t rows = numel(x.shape) / n;
  TensorF out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    float* row = out.data.data() + r * n;
    double mx = row[0];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, (double)row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    for (std::int64_t j = 0; j < n; ++j)
      row[j] = static_cast<float>(std::exp(row[j] - mx) / sum);
  }
  return out;
}

TensorF layernorm_ref(const TensorF& x, std::span<const float> gamma,
                      std::span<const float> beta, double eps) {
  const std::int64_t d = x.shape.back();
  if (static_cast<std::int64_t>(gamma.size()) != d ||
      static_cast<std::int64_t>(beta.size()) != d)
    fail(Errc::kShapeMismatch, "layernorm parameter length mismatch");
  const std::int64_t rows = numel(x.shape) / d;
  TensorF out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    float* row = out.data.data() + r * d;
    double mean = 0.0;
    for (std::int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < d; ++j)
      row[j] = static_cast<float>((row[j] - mean) * inv * gamma[j] + beta[j]);
  }
  return out;
}

TensorF bilinear_upsample_ref(const TensorF& x, std::int64_t out_h,
                              std::int64_t out_w) {
  if (x.shape.size() != 3) fail(Errc::kShapeMismatch, "expected [H x W x C]");
  const std::int64_t h = x.shape[0], w = x.shape[1], c = x.shape[2];
  TensorF out;
  out.shape = {out_h, out_w, c};
  out.data.resize(static_cast<std::size_t>(out_h * out_w * c));
  for (std::int64_t i = 0; i < out_h; ++i) {
    const double sy = std::clamp(
        (i + 0.5) * static_cast<double>(h) / out_h - 0.5, 0.0, double(h - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(sy);
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (std::int64_t j = 0; j < out_w; ++j) {
      const double sx = std::clamp(
          (j + 0.5) * static_cast<double>(w) / out_w - 0.5, 0.0, double(w - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(sx);
      const std::int64_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      for (std::int64_t ci = 0; ci < c; ++ci) {
        const double v00 = x.data[(y0 * w + x0) * c + ci];
        const double v01 = x.data[(y0 * w + x1) * c + ci];
        const double v10 = x.data[(y1 * w + x0) * c + ci];
        const double v11 = x.data[(y1 * w + x1) * c + ci];
        const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                         fy * ((1 - fx) * v10 + fx * v11);
        out.data[(i * out_w + j) * c + ci] = static_cast<float>(v);
      }
    }
  }
  return out;
}

TensorF nearest_upsample_ref(const TensorF& x, std::int64_t out_h,
                             std::int64_t out_w) {
  if (x.shape.size() != 3) fail(Errc::kShapeMismatch, "expected [H x W x C]");
  const std::int64_t h = x.shape[0], w = x.shape[1], c = x.shape[2];
  TensorF out;
  out.shape = {out_h, out_w, c};
  out.data.resize(static_cast<std::size_t>(out_h * out_w * c));
  for (std::int64_t i = 0; i < out_h; ++i)
    for (std::int64_t j = 0; j < out_w; ++j) {
      const std::int64_t si = i * h / out_h, sj = j * w / out_w;
      for (std::int64_t ci = 0; ci < c; ++ci)
        out.data[(i * out_w + j) * c + ci] = x.data[(si * w + sj) * c + ci];
    }
  return out;
}

TensorF l2_normalize_ref(const TensorF& x) {
  const std::int64_t d = x.shape.back();
  const std::int64_t rows = numel(x.shape) / d;
  TensorF out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    float* row = out.data.data() + r * d;
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) sq += double(row[j]) * row[j];
    if (sq == 0.0) continue;  // zero rows pass through
    const double inv = 1.0 / std::sqrt(sq);
    for (std::int64_t j = 0; j < d; ++j)
      row[j] = static_cast<float>(row[j] * inv);
  }
  return out;
}

TensorF shift_gelu_ref(const TensorF& x, int lambda, int k_inter) {
  const std::int64_t d = x.shape.back();
  const std::int64_t rows = numel(x.shape) / d;
  const double bound = -static_cast<double>(lambda) * k_inter;
  TensorF out = x;
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = x.data.data() + r * d;
    float* row = out.data.data() + r * d;
    double pmax = 0.0;
    for (std::int64_t j = 0; j < d; ++j)
      pmax = std::max(pmax, 1.6875 * in[j]);
    const double e_den =
        std::exp2(std::max(1.4375 * (0.0 - pmax), bound));
    for (std::int64_t j = 0; j < d; ++j) {
      const double e_num =
          std::exp2(std::max(1.4375 * (1.6875 * in[j] - pmax), bound));
      row[j] = static_cast<float>(in[j] * (e_num / (e_num + e_den)));
    }
  }
  return out;
}

namespace {

void observe_site(SiteObservers* observers, const std::string& site,
                  std::span<const float> values) {
  if (observers == nullptr) return;
  auto it = observers->find(site);
  if (it != observers->end()) it->second.observe(values);
}

const std::vector<float>& fp32_param(const Checkpoint& ckpt,
                                     const std::string& name) {
  const TensorEntry& e = ckpt.at(name);
  if (e.dtype != 0)
    fail(Errc::kModeMismatch, "reference path needs FP32 tensors: " + name);
  return e.f32;
}

// x[MxK] * w[KxN] + bias in floats; counts multiply-add flops.
TensorF flinear(const TensorF& x, const std::vector<float>& w,
                std::int64_t k, std::int64_t n, const std::vector<float>* bias,
                TraceMeters* meters, LayerKind kind) {
  const std::int64_t m = x.shape[0];
  TensorF out;
  out.shape = {m, n};
  out.data.assign(static_cast<std::size_t>(m * n), 0.0f);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = bias != nullptr ? (*bias)[j] : 0.0;
      for (std::int64_t t = 0; t < k; ++t)
        acc += double(x.data[i * k + t]) * w[t * n + j];
      out.data[i * n + j] = static_cast<float>(acc);
    }
  if (meters != nullptr) {
    meters->fp_ops += 2 * m * k * n + (bias != nullptr ? m * n : 0);
    meter_matmul(meters, kind, m, k, n, 32, 32, bias != nullptr ? 32 : 0, 32);
  }
  return out;
}

TensorF take_cols_f(const TensorF& x, std::int64_t c0, std::int64_t c1) {
  const std::int64_t rows = x.shape[0], cols = x.shape[1];
  TensorF out;
  out.shape = {rows, c1 - c0};
  out.data.resize(static_cast<std::size_t>(rows * (c1 - c0)));
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy(x.data.begin() + r * cols + c0, x.data.begin() + r * cols + c1,
              out.data.begin() + r * (c1 - c0));
  return out;
}

TensorF take_rows_f(const TensorF& x, std::int64_t r0, std::int64_t r1) {
  const std::int64_t cols = x.shape[1];
  TensorF out;
  out.shape = {r1 - r0, cols};
  out.data.assign(x.data.begin() + r0 * cols, x.data.begin() + r1 * cols);
  return out;
}

TensorF apply_gelu_variant(const TensorF& x, const Checkpoint& ckpt,
                           GeluKind kind, TraceMeters* meters) {
  if (meters != nullptr)
    meters->fp_ops += 8 * static_cast<std::int64_t>(x.data.size());
  switch (kind) {
    case GeluKind::kExact:
      return gelu_ref(x);
    case GeluKind::kShiftBaseline:
      return shift_gelu_ref(x, 1, ckpt.config.gelu.k_inter);
    case GeluKind::kLambdaShift:
      return shift_gelu_ref(x, ckpt.config.gelu.lambda,
                            ckpt.config.gelu.k_inter);
  }
  return x;
}

TensorF fblock(const TensorF& x, const Checkpoint& ckpt,
               const std::string& prefix, const Fp32Variant& variant,
               TraceMeters* meters, SiteObservers* observers,
               std::vector<TensorF>* post_gelu) {
  const ModelConfig& cfg = ckpt.config;
  const std::int64_t t = x.shape[0], d = cfg.embed_dim, dh = cfg.head_dim();
  const std::int64_t hidden = cfg.hidden_dim();

  TensorF h = layernorm_ref(x, fp32_param(ckpt, prefix + "ln1.gamma"),
                            fp32_param(ckpt, prefix + "ln1.beta"));
  observe_site(observers, prefix + "ln1", h.data);
  if (meters != nullptr) meters->fp_ops += 6 * t * d;

  const TensorF qkv =
      flinear(h, fp32_param(ckpt, prefix + "qkv.weight"), d, 3 * d,
              &fp32_param(ckpt, prefix + "qkv.bias"), meters,
              LayerKind::kLinear);
  const TensorF q = take_cols_f(qkv, 0, d);
  const TensorF k = take_cols_f(qkv, d, 2 * d);
  const TensorF v = take_cols_f(qkv, 2 * d, 3 * d);
  observe_site(observers, prefix + "q", q.data);
  observe_site(observers, prefix + "k", k.data);
  observe_site(observers, prefix + "v", v.data);

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  TensorF ctx;
  ctx.shape = {t, d};
  ctx.data.assign(static_cast<std::size_t>(t * d), 0.0f);
  for (std::int64_t head = 0; head < cfg.heads; ++head) {
    TensorF scores;
    scores.shape = {t, t};
    scores.data.assign(static_cast<std::size_t>(t * t), 0.0f);
    for (std::int64_t i = 0; i < t; ++i)
      for (std::int64_t j = 0; j < t; ++j) {
        double acc = 0.0;
        for (std::int64_t u = 0; u < dh; ++u)
          acc += double(q.data[i * d + head * dh + u]) *
                 k.data[j * d + head * dh + u];
        scores.data[i * t + j] = static_cast<float>(acc * inv_sqrt);
      }
    if (meters != nullptr) {
      meters->fp_ops += 2 * t * t * dh + t * t;
      meter_matmul(meters, LayerKind::kMatMul, t, dh, t, 32, 32, 0, 32);
    }
    observe_site(observers, prefix + "scores", scores.data);
    const TensorF attn = softmax_ref(scores);
    if (meters != nullptr) meters->fp_ops += 4 * t * t;
    for (std::int64_t i = 0; i < t; ++i)
      for (std::int64_t u = 0; u < dh; ++u) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < t; ++j)
          acc += double(attn.data[i * t + j]) * v.data[j * d + head * dh + u];
        ctx.data[i * d + head * dh + u] = static_cast<float>(acc);
      }
    if (meters != nullptr) {
      meters->fp_ops += 2 * t * t * dh;
      meter_matmul(meters, LayerKind::kMatMul, t, t, dh, 32, 32, 0, 32);
    }
  }
  observe_site(observers, prefix + "attn_ctx", ctx.data);

  const TensorF proj =
      flinear(ctx, fp32_param(ckpt, prefix + "proj.weight"), d, d,
              &fp32_param(ckpt, prefix + "proj.bias"), meters,
              LayerKind::kLinear);
  observe_site(observers, prefix + "attn_proj", proj.data);

  TensorF x1 = x;
  for (std::size_t i = 0; i < x1.data.size(); ++i) x1.data[i] += proj.data[i];
  if (meters != nullptr) meters->fp_ops += static_cast<std::int64_t>(x1.data.size());
  observe_site(observers, prefix + "res1", x1.data);

  TensorF h2 = layernorm_ref(x1, fp32_param(ckpt, prefix + "ln2.gamma"),
                             fp32_param(ckpt, prefix + "ln2.beta"));
  observe_site(observers, prefix + "ln2", h2.data);
  if (meters != nullptr) meters->fp_ops += 6 * t * d;

  const TensorF f1 =
      flinear(h2, fp32_param(ckpt, prefix + "fc1.weight"), d, hidden,
              &fp32_param(ckpt, prefix + "fc1.bias"), meters,
              LayerKind::kLinear);
  observe_site(observers, prefix + "fc1", f1.data);

  const TensorF g = apply_gelu_variant(f1, ckpt, variant.gelu, meters);
  observe_site(observers, prefix + "gelu", g.data);
  if (post_gelu != nullptr) post_gelu->push_back(g);

  const TensorF f2 =
      flinear(g, fp32_param(ckpt, prefix + "fc2.weight"), hidden, d,
              &fp32_param(ckpt, prefix + "fc2.bias"), meters,
              LayerKind::kLinear);
  observe_site(observers, prefix + "mlp_out", f2.data);

  TensorF x2 = x1;
  for (std::size_t i = 0; i < x2.data.size(); ++i) x2.data[i] += f2.data[i];
  if (meters != nullptr) meters->fp_ops += static_cast<std::int64_t>(x2.data.size());
  observe_site(observers, prefix + "res2", x2.data);
  return x2;
}

}  // namespace

Fp32Result fp32_forward(const TensorF& image, const Checkpoint& ckpt,
                        const Fp32Variant& variant, TraceMeters* meters,
                        SiteObservers* observers) {
  if (ckpt.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "reference forward requires an FP32 checkpoint");
  const ModelConfig& cfg = ckpt.config;
  if (image.shape.size() != 3 || image.shape[0] != cfg.image_h ||
      image.shape[1] != cfg.image_w || image.shape[2] != cfg.channels)
    fail(Errc::kShapeMismatch, "image shape does not match config");
  observe_site(observers, "input", image.data);

  // Patch extraction + embedding (metered as Conv).
  const std::int64_t p = cfg.patch, c = cfg.channels;
  const std::int64_t th = cfg.tokens_h(), tw = cfg.tokens_w();
  TensorF patches;
  patches.shape = {th * tw, cfg.patch_dim()};
  patches.data.resize(static_cast<std::size_t>(th * tw * cfg.patch_dim()));
  for (std::int64_t by = 0; by < th; ++by)
    for (std::int64_t bx = 0; bx < tw; ++bx) {
      float* dst = patches.data.data() + (by * tw + bx) * cfg.patch_dim();
      for (std::int64_t py = 0; py < p; ++py)
        for (std::int64_t px = 0; px < p; ++px)
          for (std::int64_t ci = 0; ci < c; ++ci)
            dst[(py * p + px) * c + ci] =
                image.data[((by * p + py) * cfg.image_w + bx * p + px) * c + ci];
    }
  TensorF tokens = flinear(patches, fp32_param(ckpt, "patch_embed.weight"),
                           cfg.patch_dim(), cfg.embed_dim,
                           &fp32_param(ckpt, "patch_embed.bias"), meters,
                           LayerKind::kConv);
  observe_site(observers, "patch_embed", tokens.data);

  const std::vector<float>& pos = fp32_param(ckpt, "pos_embed");
  for (std::size_t i = 0; i < tokens.data.size(); ++i)
    tokens.data[i] += pos[i];
  if (meters != nullptr)
    meters->fp_ops += static_cast<std::int64_t>(tokens.data.size());
  observe_site(observers, "embed_pos", tokens.data);

  Fp32Result result;
  TensorF x = tokens;
  for (std::int64_t i = 0; i < cfg.enc_depth; ++i)
    x = fblock(x, ckpt, "enc" + std::to_string(i) + ".", variant, meters,
               observers, &result.post_gelu);
  result.encoder_out = x;

  // Decoder: append class embeddings, run blocks, project, inner product.
  const std::int64_t n = cfg.tokens(), kcls = cfg.classes, d = cfg.embed_dim;
  TensorF z;
  z.shape = {n + kcls, d};
  z.data = x.data;
  const std::vector<float>& cls = fp32_param(ckpt, "cls_embed");
  z.data.insert(z.data.end(), cls.begin(), cls.end());
  observe_site(observers, "dec_in", z.data);

  for (std::int64_t i = 0; i < cfg.dec_depth; ++i)
    z = fblock(z, ckpt, "dec" + std::to_string(i) + ".", variant, meters,
               observers, &result.post_gelu);

  TensorF z_m = take_rows_f(z, 0, n);
  TensorF cemb = take_rows_f(z, n, n + kcls);
  TensorF zp = flinear(z_m, fp32_param(ckpt, "proj_patch.weight"), d, d,
                       nullptr, meters, LayerKind::kLinear);
  TensorF cp = flinear(cemb, fp32_param(ckpt, "proj_cls.weight"), d, d,
                       nullptr, meters, LayerKind::kLinear);
  observe_site(observers, "z_m_proj", zp.data);
  observe_site(observers, "cls_proj", cp.data);

  if (variant.l2_norm) {
    zp = l2_normalize_ref(zp);
    cp = l2_normalize_ref(cp);
    if (meters != nullptr)
      meters->fp_ops += 2 * static_cast<std::int64_t>(zp.data.size() + cp.data.size());
  }

  TensorF logits;
  logits.shape = {n, kcls};
  logits.data.assign(static_cast<std::size_t>(n * kcls), 0.0f);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < kcls; ++j) {
      double acc = 0.0;
      for (std::int64_t u = 0; u < d; ++u)
        acc += double(zp.data[i * d + u]) * cp.data[j * d + u];
      logits.data[i * kcls + j] = static_cast<float>(acc);
    }
  if (meters != nullptr) {
    meters->fp_ops += 2 * n * kcls * d;
    meter_matmul(meters, LayerKind::kMatMul, n, d, kcls, 32, 32, 0, 32);
  }
  observe_site(observers, "mask_logits", logits.data);

  // Refinement: reshape, upsample, per-pixel argmax (ties: lowest index).
  TensorF grid;
  grid.shape = {th, tw, kcls};
  grid.data = logits.data;
  const TensorF up = variant.interp == Interp::kBilinear
                         ? bilinear_upsample_ref(grid, cfg.image_h, cfg.image_w)
                         : nearest_upsample_ref(grid, cfg.image_h, cfg.image_w);
  result.class_map.resize(static_cast<std::size_t>(cfg.image_h * cfg.image_w));
  for (std::int64_t i = 0; i < cfg.image_h * cfg.image_w; ++i) {
    const float* cell = up.data.data() + i * kcls;
    int best = 0;
    for (std::int64_t k = 1; k < kcls; ++k)
      if (cell[k] > cell[best]) best = static_cast<int>(k);
    result.class_map[i] = best;
  }
  result.logits = std::move(logits);
  return result;
}

FidelityReport rmse_g(const std::vector<TensorF>& ref,
                      const std::vector<TensorF>& test) {
  if (ref.size() != test.size())
    fail(Errc::kShapeMismatch, "block counts differ");
  FidelityReport report;
  report.blocks = static_cast<std::int64_t>(ref.size());
  double total = 0.0;
  std::int64_t total_n = 0;
  for (std::size_t b = 0; b < ref.size(); ++b) {
    if (ref[b].shape != test[b].shape)
      fail(Errc::kShapeMismatch, "activation shapes differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < ref[b].data.size(); ++i) {
      const double diff = double(ref[b].data[i]) - test[b].data[i];
      sq += diff * diff;
    }
    const std::int64_t n = ref[b].size();
    report.per_block_rmse.push_back(n > 0 ? std::sqrt(sq / n) : 0.0);
    total += sq;
    total_n += n;
  }
  if (!ref.empty() && ref[0].shape.size() == 2) {
    report.features = ref[0].shape[1];
    report.rows = ref[0].shape[0];
  }
  report.rmse_g = total_n > 0 ? std::sqrt(total / total_n) : 0.0;
  return report;
}

void append_blocks(std::vector<TensorF>& dst, const std::vector<TensorF>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  if (dst.size() != src.size())
    fail(Errc::kShapeMismatch, "block counts differ");
  for (std::size_t b = 0; b < src.size(); ++b) {
    dst[b].data.insert(dst[b].data.end(), src[b].data.begin(),
                       src[b].data.end());
    dst[b].shape[0] += src[b].shape[0];
  }
}

MiouResult miou(std::span<const int> pred, std::span<const int> gt,
                int classes) {
  if (pred.size() != gt.size()) fail(Errc::kShapeMismatch, "map sizes differ");
  std::vector<std::int64_t> inter(classes, 0), uni(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= classes || gt[i] < 0 || gt[i] >= classes)
      fail(Errc::kInvalidInput, "class index out of range");
    if (pred[i] == gt[i]) {
      ++inter[pred[i]];
      ++uni[pred[i]];
    } else {
      ++uni[pred[i]];
      ++uni[gt[i]];
    }
  }
  MiouResult result;
  result.per_class.assign(classes, 0.0);
  result.present.assign(classes, false);
  double sum = 0.0;
  int counted = 0;
  for (int k = 0; k < classes; ++k) {
    if (uni[k] == 0) continue;  // absent from both maps
    result.present[k] = true;
    result.per_class[k] = static_cast<double>(inter[k]) / uni[k];
    sum += result.per_class[k];
    ++counted;
  }
  result.mean = counted > 0 ? sum / counted : 0.0;
  return result;
}

double agreement(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) fail(Errc::kShapeMismatch, "map sizes differ");
  if (a.empty()) return 1.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] == b[i]) ++same;
  return static_cast<double>(same) / a.size();
}

double logit_cosine(const TensorF& a, const TensorF& b) {
  if (a.data.size() != b.data.size())
    fail(Errc::kShapeMismatch, "logit sizes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    dot += double(a.data[i]) * b.data[i];
    na += double(a.data[i]) * a.data[i];
    nb += double(b.data[i]) * b.data[i];
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return dot / std::sqrt(na * nb);
}

}  // namespace iseg
