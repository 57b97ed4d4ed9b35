#include "iseg/model.hpp"

#include <algorithm>
#include <cmath>

namespace iseg {

void validate(const ModelConfig& config) {
  if (config.image_h <= 0 || config.image_w <= 0 || config.patch <= 0)
    fail(Errc::kBadArgument, "image and patch sizes must be positive");
  if (config.image_h % config.patch != 0 || config.image_w % config.patch != 0)
    fail(Errc::kBadArgument, "image size must be divisible by patch");
  if (config.channels <= 0) fail(Errc::kBadArgument, "channels must be positive");
  if (config.embed_dim <= 0 || config.embed_dim % config.heads != 0)
    fail(Errc::kBadArgument, "embed_dim must be divisible by heads");
  if (config.enc_depth < 1 || config.dec_depth < 1)
    fail(Errc::kBadArgument, "depths must be at least 1");
  if (config.classes < 2) fail(Errc::kBadArgument, "need at least two classes");
  if (config.mlp_ratio <= 0.0) fail(Errc::kBadArgument, "mlp_ratio must be positive");
  if (config.softmax_k_out < 2 || config.softmax_k_out > 16 ||
      config.softmax_k_inter < 8 || config.softmax_k_inter > 30)
    fail(Errc::kBadArgument, "softmax precision out of range");
  validate(config.gelu);
  QuantSpec spec{8, config.dyadic_bits};
  validate(spec);
}

TensorEntry TensorEntry::fp32(Shape shape, std::vector<float> values) {
  check_shape_data(shape, values.size(), "tensor entry");
  TensorEntry e;
  e.dtype = 0;
  e.shape = std::move(shape);
  e.f32 = std::move(values);
  return e;
}

TensorEntry TensorEntry::quant(const QuantizedTensor& q) {
  TensorEntry e;
  e.dtype = q.width == 8 ? 1 : (q.width == 16 ? 2 : 3);
  e.shape = q.shape;
  e.qdata = q.data;
  e.has_scale = true;
  e.scale = q.scale;
  return e;
}

TensorEntry TensorEntry::site(const DyadicScale& scale) {
  TensorEntry e;
  e.dtype = 3;
  e.shape = {0};
  e.has_scale = true;
  e.scale = scale;
  return e;
}

int TensorEntry::width() const {
  switch (dtype) {
    case 1: return 8;
    case 2: return 16;
    case 3: return 32;
    default: return 32;
  }
}

QuantizedTensor TensorEntry::as_quant() const {
  if (dtype == 0) fail(Errc::kModeMismatch, "FP32 entry used as integer tensor");
  QuantizedTensor q;
  q.data = qdata;
  q.shape = shape;
  q.width = width();
  q.scale = scale;
  return q;
}

const TensorEntry& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end())
    fail(Errc::kCheckpointInconsistency, "missing tensor: " + name);
  return it->second;
}

const DyadicScale& Checkpoint::site_scale(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end() || !it->second.has_scale)
    fail(Errc::kNotCalibrated, "uncalibrated site: " + name);
  return it->second.scale;
}

namespace {

const char* kBlockSites[] = {"ln1",  "q",         "k",    "v",
                             "scores", "attn_ctx", "attn_proj", "res1",
                             "ln2",  "fc1",       "gelu", "mlp_out",
                             "res2"};

std::string block_prefix(bool decoder, std::int64_t i) {
  return (decoder ? "dec" : "enc") + std::to_string(i) + ".";
}

}  // namespace

std::vector<std::string> parameter_names(const ModelConfig& config) {
  std::vector<std::string> names = {"patch_embed.weight", "patch_embed.bias",
                                    "pos_embed", "cls_embed",
                                    "proj_patch.weight", "proj_cls.weight"};
  auto block = [&](const std::string& p) {
    for (const char* t :
         {"ln1.gamma", "ln1.beta", "qkv.weight", "qkv.bias", "proj.weight",
          "proj.bias", "ln2.gamma", "ln2.beta", "fc1.weight", "fc1.bias",
          "fc2.weight", "fc2.bias"})
      names.push_back(p + t);
  };
  for (std::int64_t i = 0; i < config.enc_depth; ++i)
    block(block_prefix(false, i));
  for (std::int64_t i = 0; i < config.dec_depth; ++i)
    block(block_prefix(true, i));
  return names;
}

std::vector<std::string> activation_sites(const ModelConfig& config) {
  std::vector<std::string> sites = {"input", "patch_embed", "embed_pos"};
  for (std::int64_t i = 0; i < config.enc_depth; ++i)
    for (const char* s : kBlockSites) sites.push_back(block_prefix(false, i) + s);
  sites.push_back("dec_in");
  for (std::int64_t i = 0; i < config.dec_depth; ++i)
    for (const char* s : kBlockSites) sites.push_back(block_prefix(true, i) + s);
  sites.push_back("z_m_proj");
  sites.push_back("cls_proj");
  sites.push_back("mask_logits");
  return sites;
}

int site_width(const std::string& site) {
  const auto dot = site.rfind('.');
  const std::string leaf = dot == std::string::npos ? site : site.substr(dot + 1);
  if (leaf == "scores" || leaf == "attn_proj" || leaf == "res1" ||
      leaf == "mlp_out" || leaf == "res2" || leaf == "patch_embed" ||
      leaf == "embed_pos" || leaf == "dec_in" || leaf == "mask_logits")
    return 16;
  return 8;
}

std::string input_site_of(const ModelConfig& config, const std::string& weight) {
  (void)config;
  if (weight == "patch_embed.weight") return "input";
  const auto dot = weight.find('.');
  const std::string prefix = weight.substr(0, dot + 1);  // "enc0." etc
  const std::string leaf = weight.substr(dot + 1);
  if (leaf == "qkv.weight") return prefix + "ln1";
  if (leaf == "proj.weight") return prefix + "attn_ctx";
  if (leaf == "fc1.weight") return prefix + "ln2";
  if (leaf == "fc2.weight") return prefix + "gelu";
  fail(Errc::kBadArgument, "no input site for " + weight);
}

void validate_widths(const Checkpoint& ckpt) {
  if (ckpt.mode == Mode::kFp32) {
    for (const auto& [name, entry] : ckpt.tensors)
      if (entry.dtype != 0)
        fail(Errc::kCheckpointInconsistency,
             "FP32 checkpoint holds integer tensor: " + name);
    return;
  }
  for (const std::string& name : parameter_names(ckpt.config)) {
    const TensorEntry& e = ckpt.at(name);
    if (e.dtype == 0)
      fail(Errc::kCheckpointInconsistency, "FP32 payload in INT mode: " + name);
    if (!e.has_scale)
      fail(Errc::kCheckpointInconsistency, "missing scale on " + name);
    const bool is_bias = name.ends_with(".bias") || name.ends_with(".beta");
    const int expected = is_bias ? 32 : 8;
    if (e.width() != expected)
      fail(Errc::kCheckpointInconsistency,
           name + ": expected width " + std::to_string(expected));
  }
  for (const std::string& site : activation_sites(ckpt.config)) {
    auto it = ckpt.tensors.find(site);
    if (it == ckpt.tensors.end() || !it->second.has_scale)
      fail(Errc::kCheckpointInconsistency, "missing site scale: " + site);
  }
  if (!ckpt.has("attn.inv_sqrt_head_dim"))
    fail(Errc::kCheckpointInconsistency, "missing attention scale constant");
  for (const auto& [name, entry] : ckpt.tensors)
    if (entry.dtype == 0)
      fail(Errc::kCheckpointInconsistency,
           "FP32 payload in INT mode: " + name);
}

namespace {

QuantizedTensor widen16(QuantizedTensor q) {
  q.width = 16;
  return q;
}

QuantizedTensor take_cols(const QuantizedTensor& q, std::int64_t c0,
                          std::int64_t c1) {
  const std::int64_t rows = q.shape[0], cols = q.shape[1];
  QuantizedTensor out;
  out.shape = {rows, c1 - c0};
  out.width = q.width;
  out.scale = q.scale;
  out.data.resize(static_cast<std::size_t>(rows * (c1 - c0)));
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy(q.data.begin() + r * cols + c0, q.data.begin() + r * cols + c1,
              out.data.begin() + r * (c1 - c0));
  return out;
}

QuantizedTensor take_rows(const QuantizedTensor& q, std::int64_t r0,
                          std::int64_t r1) {
  const std::int64_t cols = q.shape[1];
  QuantizedTensor out;
  out.shape = {r1 - r0, cols};
  out.width = q.width;
  out.scale = q.scale;
  out.data.assign(q.data.begin() + r0 * cols, q.data.begin() + r1 * cols);
  return out;
}

QuantizedTensor transpose2(const QuantizedTensor& q) {
  const std::int64_t rows = q.shape[0], cols = q.shape[1];
  QuantizedTensor out;
  out.shape = {cols, rows};
  out.width = q.width;
  out.scale = q.scale;
  out.data.resize(q.data.size());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      out.data[c * rows + r] = q.data[r * cols + c];
  return out;
}

struct AccResult {
  std::vector<std::int64_t> acc;
  Shape shape;
  DyadicScale combined;
};

// Matmul plus bias into a 64-bit accumulator; metering follows the INT32
// register model (accumulator write plus requantized write of w_out bits).
AccResult matmul_acc(const QuantizedTensor& x, const QuantizedTensor& w,
                     const QuantizedTensor* bias, TraceMeters* meters,
                     LayerKind kind, int w_out) {
  const std::int64_t m = x.shape[0], k = x.shape[1], n = w.shape[1];
  if (w.shape[0] != k) fail(Errc::kShapeMismatch, "linear inner dims differ");
  AccResult r;
  r.shape = {m, n};
  r.combined = dyadic_mul(x.scale, w.scale);
  if (bias != nullptr) {
    if (bias->size() != n) fail(Errc::kShapeMismatch, "bias length mismatch");
    if (!(bias->scale == r.combined))
      fail(Errc::kCheckpointInconsistency,
           "bias scale does not equal S_x * S_w");
  }
  r.acc.assign(static_cast<std::size_t>(m * n), 0);
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int32_t* xrow = x.data.data() + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      std::int64_t s = bias != nullptr ? bias->data[j] : 0;
      for (std::int64_t t = 0; t < k; ++t)
        s += static_cast<std::int64_t>(xrow[t]) * w.data[t * n + j];
      r.acc[i * n + j] = s;
    }
  }
  meter_matmul(meters, kind, m, k, n, x.width, w.width,
               bias != nullptr ? 32 : 0, w_out);
  return r;
}

LayerNormParams ln_params(const Checkpoint& ckpt, const std::string& name) {
  LayerNormParams p;
  p.gamma = ckpt.at(name + ".gamma").as_quant();
  p.beta = ckpt.at(name + ".beta").as_quant();
  return p;
}

QuantizedTensor requant_cols(const AccResult& acc, std::int64_t c0,
                             std::int64_t c1, const DyadicScale& out_scale,
                             int k_out) {
  const std::int64_t rows = acc.shape[0], cols = acc.shape[1];
  std::vector<std::int64_t> slice(static_cast<std::size_t>(rows * (c1 - c0)));
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy(acc.acc.begin() + r * cols + c0, acc.acc.begin() + r * cols + c1,
              slice.begin() + r * (c1 - c0));
  return requantize_dyadic(slice, {rows, c1 - c0}, acc.combined, out_scale,
                           k_out);
}

QuantizedTensor transformer_block(const QuantizedTensor& x,
                                  const Checkpoint& ckpt,
                                  const std::string& prefix,
                                  TraceMeters* meters,
                                  ActivationTrace* trace) {
  const ModelConfig& cfg = ckpt.config;
  const std::int64_t t = x.shape[0];
  const std::int64_t d = cfg.embed_dim;
  const std::int64_t dh = cfg.head_dim();

  // Attention path.
  const QuantizedTensor h = i_layernorm(
      x, ln_params(ckpt, prefix + "ln1"), ckpt.site_scale(prefix + "ln1"), 8);
  const QuantizedTensor w_qkv = ckpt.at(prefix + "qkv.weight").as_quant();
  const QuantizedTensor b_qkv = ckpt.at(prefix + "qkv.bias").as_quant();
  const AccResult qkv =
      matmul_acc(h, w_qkv, &b_qkv, meters, LayerKind::kLinear, 8);
  const QuantizedTensor q =
      requant_cols(qkv, 0, d, ckpt.site_scale(prefix + "q"), 8);
  const QuantizedTensor k =
      requant_cols(qkv, d, 2 * d, ckpt.site_scale(prefix + "k"), 8);
  const QuantizedTensor v =
      requant_cols(qkv, 2 * d, 3 * d, ckpt.site_scale(prefix + "v"), 8);

  const DyadicScale inv_sqrt = ckpt.site_scale("attn.inv_sqrt_head_dim");
  const DyadicScale score_site = ckpt.site_scale(prefix + "scores");
  const DyadicScale ctx_site = ckpt.site_scale(prefix + "attn_ctx");

  std::vector<std::int64_t> ctx_acc(static_cast<std::size_t>(t * d), 0);
  DyadicScale ctx_combined;
  for (std::int64_t head = 0; head < cfg.heads; ++head) {
    const QuantizedTensor qh = take_cols(q, head * dh, (head + 1) * dh);
    const QuantizedTensor kh = take_cols(k, head * dh, (head + 1) * dh);
    const QuantizedTensor vh = take_cols(v, head * dh, (head + 1) * dh);

    QuantizedTensor score_acc = int_matmul(qh, transpose2(kh));
    meter_matmul(meters, LayerKind::kMatMul, t, dh, t, 8, 8, 0, 16);
    const DyadicScale score_combined = dyadic_mul(score_acc.scale, inv_sqrt);
    const QuantizedTensor scores =
        requantize_dyadic(std::span<const std::int32_t>(score_acc.data),
                          score_acc.shape, score_combined, score_site, 16);

    const QuantizedTensor attn =
        shiftmax(scores, cfg.softmax_k_inter, cfg.softmax_k_out);
    QuantizedTensor head_ctx = int_matmul(attn, vh);
    meter_matmul(meters, LayerKind::kMatMul, t, t, dh, 16, 8, 0, 8);
    ctx_combined = head_ctx.scale;
    for (std::int64_t i = 0; i < t; ++i)
      for (std::int64_t j = 0; j < dh; ++j)
        ctx_acc[i * d + head * dh + j] = head_ctx.data[i * dh + j];
  }
  const QuantizedTensor ctx =
      requantize_dyadic(ctx_acc, {t, d}, ctx_combined, ctx_site, 8);

  const QuantizedTensor proj = linear(
      ctx, ckpt.at(prefix + "proj.weight").as_quant(),
      ckpt.at(prefix + "proj.bias").as_quant(),
      ckpt.site_scale(prefix + "attn_proj"), 16, meters, LayerKind::kLinear);
  const QuantizedTensor x1 =
      residual_add(x, proj, ckpt.site_scale(prefix + "res1"));

  // MLP path.
  const QuantizedTensor h2 = i_layernorm(
      x1, ln_params(ckpt, prefix + "ln2"), ckpt.site_scale(prefix + "ln2"), 8);
  const QuantizedTensor f1 = linear(
      h2, ckpt.at(prefix + "fc1.weight").as_quant(),
      ckpt.at(prefix + "fc1.bias").as_quant(),
      ckpt.site_scale(prefix + "fc1"), 8, meters, LayerKind::kLinear);
  const QuantizedTensor g_raw = lambda_shift_gelu(f1, cfg.gelu);
  const QuantizedTensor g =
      requantize_dyadic(std::span<const std::int32_t>(g_raw.data), g_raw.shape,
                        g_raw.scale, ckpt.site_scale(prefix + "gelu"), 8);
  if (trace != nullptr) trace->post_gelu.push_back(dequantize_f(g));
  const QuantizedTensor f2 = linear(
      g, ckpt.at(prefix + "fc2.weight").as_quant(),
      ckpt.at(prefix + "fc2.bias").as_quant(),
      ckpt.site_scale(prefix + "mlp_out"), 16, meters, LayerKind::kLinear);
  return residual_add(x1, f2, ckpt.site_scale(prefix + "res2"));
}

void require_int_mode(const Checkpoint& ckpt) {
  if (ckpt.mode != Mode::kInt)
    fail(Errc::kModeMismatch, "integer forward requires an INT checkpoint");
}

}  // namespace

QuantizedTensor patch_embed(const QuantizedTensor& image,
                            const Checkpoint& ckpt, TraceMeters* meters) {
  require_int_mode(ckpt);
  const ModelConfig& cfg = ckpt.config;
  if (image.shape.size() != 3 || image.shape[0] != cfg.image_h ||
      image.shape[1] != cfg.image_w || image.shape[2] != cfg.channels)
    fail(Errc::kShapeMismatch, "image shape does not match config");

  const std::int64_t p = cfg.patch, c = cfg.channels;
  const std::int64_t th = cfg.tokens_h(), tw = cfg.tokens_w();
  QuantizedTensor patches;
  patches.shape = {th * tw, cfg.patch_dim()};
  patches.width = image.width;
  patches.scale = image.scale;
  patches.data.resize(static_cast<std::size_t>(th * tw * cfg.patch_dim()));
  for (std::int64_t by = 0; by < th; ++by)
    for (std::int64_t bx = 0; bx < tw; ++bx) {
      std::int32_t* dst =
          patches.data.data() + (by * tw + bx) * cfg.patch_dim();
      for (std::int64_t py = 0; py < p; ++py)
        for (std::int64_t px = 0; px < p; ++px)
          for (std::int64_t ci = 0; ci < c; ++ci)
            dst[(py * p + px) * c + ci] =
                image.data[((by * p + py) * cfg.image_w + bx * p + px) * c + ci];
    }

  return linear(patches, ckpt.at("patch_embed.weight").as_quant(),
                ckpt.at("patch_embed.bias").as_quant(),
                ckpt.site_scale("patch_embed"), 16, meters, LayerKind::kConv);
}

QuantizedTensor encoder_forward(const QuantizedTensor& tokens,
                                const Checkpoint& ckpt, TraceMeters* meters,
                                ActivationTrace* trace) {
  require_int_mode(ckpt);
  const QuantizedTensor pos = widen16(ckpt.at("pos_embed").as_quant());
  QuantizedTensor x = residual_add(tokens, pos, ckpt.site_scale("embed_pos"));
  for (std::int64_t i = 0; i < ckpt.config.enc_depth; ++i)
    x = transformer_block(x, ckpt, block_prefix(false, i), meters, trace);
  return x;
}

QuantizedTensor decoder_forward(const QuantizedTensor& z,
                                const Checkpoint& ckpt, TraceMeters* meters,
                                ActivationTrace* trace) {
  require_int_mode(ckpt);
  const ModelConfig& cfg = ckpt.config;
  const std::int64_t n = cfg.tokens(), kcls = cfg.classes, d = cfg.embed_dim;

  const DyadicScale dec_in = ckpt.site_scale("dec_in");
  const QuantizedTensor z_r = requantize_dyadic(
      std::span<const std::int32_t>(z.data), z.shape, z.scale, dec_in, 16);
  const QuantizedTensor cls = ckpt.at("cls_embed").as_quant();
  const QuantizedTensor cls_r = requantize_dyadic(
      std::span<const std::int32_t>(cls.data), cls.shape, cls.scale, dec_in, 16);

  QuantizedTensor x;
  x.shape = {n + kcls, d};
  x.width = 16;
  x.scale = dec_in;
  x.data = z_r.data;
  x.data.insert(x.data.end(), cls_r.data.begin(), cls_r.data.end());

  for (std::int64_t i = 0; i < cfg.dec_depth; ++i)
    x = transformer_block(x, ckpt, block_prefix(true, i), meters, trace);

  const QuantizedTensor z_m = take_rows(x, 0, n);
  const QuantizedTensor c = take_rows(x, n, n + kcls);
  QuantizedTensor none;  // projections carry no bias
  const QuantizedTensor zp =
      linear(z_m, ckpt.at("proj_patch.weight").as_quant(), none,
             ckpt.site_scale("z_m_proj"), 8, meters, LayerKind::kLinear);
  const QuantizedTensor cp =
      linear(c, ckpt.at("proj_cls.weight").as_quant(), none,
             ckpt.site_scale("cls_proj"), 8, meters, LayerKind::kLinear);

  QuantizedTensor mask_acc = int_matmul(zp, transpose2(cp));
  meter_matmul(meters, LayerKind::kMatMul, n, d, kcls, 8, 8, 0, 16);
  return requantize_dyadic(std::span<const std::int32_t>(mask_acc.data),
                           mask_acc.shape, mask_acc.scale,
                           ckpt.site_scale("mask_logits"), 16);
}

std::vector<int> mask_refine(const QuantizedTensor& logits,
                             const ModelConfig& config, const PadInfo& pad) {
  const std::int64_t th = config.tokens_h(), tw = config.tokens_w();
  const std::int64_t kcls = config.classes;
  if (logits.shape.size() != 2 || logits.shape[0] != th * tw ||
      logits.shape[1] != kcls)
    fail(Errc::kShapeMismatch, "mask logits shape does not match token grid");

  QuantizedTensor grid;
  grid.shape = {th, tw, kcls};
  grid.width = logits.width;
  grid.scale = logits.scale;
  grid.data = logits.data;

  const QuantizedTensor up =
      nearest_upsample(grid, config.image_h, config.image_w);

  const std::int64_t oh = pad.height > 0 ? pad.height : config.image_h;
  const std::int64_t ow = pad.width > 0 ? pad.width : config.image_w;
  if (pad.top < 0 || pad.left < 0 || pad.top + oh > config.image_h ||
      pad.left + ow > config.image_w)
    fail(Errc::kBadArgument, "inconsistent pad_info");

  std::vector<int> map(static_cast<std::size_t>(oh * ow));
  for (std::int64_t i = 0; i < oh; ++i)
    for (std::int64_t j = 0; j < ow; ++j) {
      const std::int32_t* cell =
          up.data.data() + ((pad.top + i) * config.image_w + pad.left + j) * kcls;
      int best = 0;
      for (std::int64_t k = 1; k < kcls; ++k)
        if (cell[k] > cell[best]) best = static_cast<int>(k);  // ties: lowest index
      map[i * ow + j] = best;
    }
  return map;
}

ForwardResult forward(const QuantizedTensor& image, const Checkpoint& ckpt,
                      TraceMeters* meters, ActivationTrace* trace) {
  require_int_mode(ckpt);
  const QuantizedTensor tokens = patch_embed(image, ckpt, meters);
  const QuantizedTensor z = encoder_forward(tokens, ckpt, meters, trace);
  const QuantizedTensor logits = decoder_forward(z, ckpt, meters, trace);
  ForwardResult result;
  result.class_map = mask_refine(logits, ckpt.config, PadInfo{});
  result.logits = logits;
  return result;
}

QuantizedTensor quantize_input(const TensorF& image, const Checkpoint& ckpt) {
  require_int_mode(ckpt);
  const ModelConfig& cfg = ckpt.config;
  const DyadicScale s = ckpt.site_scale("input");
  const double sd = s.value();
  QuantizedTensor q;
  q.shape = {cfg.image_h, cfg.image_w, cfg.channels};
  q.width = 8;
  q.scale = s;
  check_shape_data(q.shape, image.data.size(), "input image");
  q.data.resize(image.data.size());
  const std::int64_t hi = qmax(8);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    if (!std::isfinite(image.data[i]))
      fail(Errc::kInvalidInput, "non-finite image value");
    const std::int64_t v = std::llround(image.data[i] / sd);
    q.data[i] = static_cast<std::int32_t>(std::clamp(v, -hi, hi));
  }
  return q;
}

}  // namespace iseg
