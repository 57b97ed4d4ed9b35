#include "iseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "iseg/container.hpp"
#include "iseg/reference.hpp"

namespace iseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct FieldMode {
  double amp, fx, fy, phase;
};

std::vector<FieldMode> draw_modes(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  std::uniform_int_distribution<int> freq(1, 3);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<FieldMode> modes(count);
  for (auto& m : modes)
    m = {amp(rng), double(freq(rng)), double(freq(rng)), phase(rng)};
  return modes;
}

double eval_modes(const std::vector<FieldMode>& modes, double x, double y,
                  std::int64_t w, std::int64_t h) {
  double v = 0.0;
  for (const auto& m : modes)
    v += m.amp * std::sin(2.0 * kPi * (m.fx * x / w + m.fy * y / h) + m.phase);
  return v;
}

}  // namespace

SynthSample synth_sample(const SynthSpec& spec, int index) {
  if (spec.size % spec.patch != 0)
    fail(Errc::kBadArgument, "size must be divisible by patch");
  // One deterministic stream per (seed, index) pair.
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + index + 1);
  const auto modes = draw_modes(rng, 4);
  const auto noise = draw_modes(rng, 3);
  const std::int64_t s = spec.size;

  // Normalize the raw field to [0, classes) using its own extrema.
  double lo = 1e30, hi = -1e30;
  std::vector<double> raw(static_cast<std::size_t>(s * s));
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      const double v = eval_modes(modes, double(x), double(y), s, s);
      raw[y * s + x] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = std::max(hi - lo, 1e-9);

  SynthSample sample;
  sample.image.shape = {s, s, 1};
  sample.image.data.resize(raw.size());
  sample.label.resize(raw.size());
  auto level = [&](double v) {
    return std::min((v - lo) / span * spec.classes,
                    spec.classes - 1e-6);
  };
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      const double g = level(raw[y * s + x]);
      const double n =
          0.08 * eval_modes(noise, double(x), double(y), s, s);
      sample.image.data[y * s + x] = static_cast<float>(g + n);
    }

  // Labels are constant on half-patch blocks, sampled at block centers, so
  // class regions cut through patch cells.
  const std::int64_t block = std::max<std::int64_t>(spec.patch / 2, 1);
  for (std::int64_t by = 0; by < s; by += block)
    for (std::int64_t bx = 0; bx < s; bx += block) {
      const double cx = std::min<double>(bx + block / 2.0, s - 1);
      const double cy = std::min<double>(by + block / 2.0, s - 1);
      const double g = level(eval_modes(modes, cx, cy, s, s));
      const int cls = static_cast<int>(g);
      for (std::int64_t y = by; y < std::min(by + block, s); ++y)
        for (std::int64_t x = bx; x < std::min(bx + block, s); ++x)
          sample.label[y * s + x] = cls;
    }
  return sample;
}

void generate_dataset(const std::string& dir, const SynthSpec& spec) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(Errc::kIoError, "cannot create directory: " + dir);
  char name[32];
  for (int i = 0; i < spec.n; ++i) {
    const SynthSample sample = synth_sample(spec, i);
    std::snprintf(name, sizeof(name), "img_%04d.iseg", i);
    write_tensor_file(dir + "/" + name, sample.image);
    std::snprintf(name, sizeof(name), "label_%04d.pgm", i);
    write_pgm(dir + "/" + name, sample.label, spec.size, spec.size);
  }
}

namespace {

std::vector<float> zeros(std::int64_t n) {
  return std::vector<float>(static_cast<std::size_t>(n), 0.0f);
}

std::vector<float> ones(std::int64_t n) {
  return std::vector<float>(static_cast<std::size_t>(n), 1.0f);
}

void put(Checkpoint& ckpt, const std::string& name, Shape shape,
         std::vector<float> values) {
  ckpt.tensors.emplace(name,
                       TensorEntry::fp32(std::move(shape), std::move(values)));
}

// Feature 0 of the LN output for a token carrying (a, 1, 0, ..., 0).
double ln_feature0(double a, std::int64_t d) {
  const double mean = (a + 1.0) / d;
  double var = (a - mean) * (a - mean) + (1.0 - mean) * (1.0 - mean) +
               (d - 2) * mean * mean;
  var /= d;
  return (a - mean) / std::sqrt(var + 1e-5);
}

}  // namespace

Checkpoint make_structured_checkpoint(const ModelConfig& config) {
  validate(config);
  const std::int64_t d = config.embed_dim;
  const std::int64_t hidden = config.hidden_dim();
  const std::int64_t kcls = config.classes;
  if (d < kcls + 2) fail(Errc::kBadArgument, "embed_dim too small for classes");
  if (hidden < 2 * kcls) fail(Errc::kBadArgument, "hidden dim too small");

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.mode = Mode::kFp32;

  // Patch embedding: feature 0 = patch mean intensity, feature 1 = 1.
  {
    const std::int64_t pd = config.patch_dim();
    std::vector<float> w(static_cast<std::size_t>(pd * d), 0.0f);
    for (std::int64_t i = 0; i < pd; ++i)
      w[i * d + 0] = 1.0f / static_cast<float>(pd);
    std::vector<float> b = zeros(d);
    b[1] = 1.0f;
    put(ckpt, "patch_embed.weight", {pd, d}, std::move(w));
    put(ckpt, "patch_embed.bias", {d}, std::move(b));
  }
  put(ckpt, "pos_embed", {config.tokens(), d}, zeros(config.tokens() * d));

  // Class embeddings select the class channels written by the first block.
  {
    std::vector<float> cls(static_cast<std::size_t>(kcls * d), 0.0f);
    for (std::int64_t k = 0; k < kcls; ++k) cls[k * d + 2 + k] = 1.0f;
    put(ckpt, "cls_embed", {kcls, d}, std::move(cls));
  }
  for (const char* name : {"proj_patch.weight", "proj_cls.weight"}) {
    std::vector<float> eye(static_cast<std::size_t>(d * d), 0.0f);
    for (std::int64_t i = 0; i < d; ++i) eye[i * d + i] = 1.0f;
    put(ckpt, name, {d, d}, std::move(eye));
  }

  // Class-level thresholds in LN-output units; level edges sit at integer
  // intensities 1 .. K-1.
  std::vector<double> theta(kcls + 1);
  for (std::int64_t k = 1; k < kcls; ++k)
    theta[k] = ln_feature0(static_cast<double>(k), d);
  double min_gap = 1e30;
  for (std::int64_t k = 1; k + 1 < kcls; ++k) {
    if (theta[k + 1] <= theta[k])
      fail(Errc::kBadArgument, "bucket thresholds not increasing");
    min_gap = std::min(min_gap, theta[k + 1] - theta[k]);
  }
  if (kcls == 2) min_gap = 0.5;
  const double width = 0.5 * min_gap;
  const double slope = 8.0;
  const double amp = 30.0 / width;

  auto block = [&](const std::string& prefix, bool classify) {
    put(ckpt, prefix + "ln1.gamma", {d}, ones(d));
    put(ckpt, prefix + "ln1.beta", {d}, zeros(d));
    put(ckpt, prefix + "qkv.weight", {d, 3 * d}, zeros(d * 3 * d));
    put(ckpt, prefix + "qkv.bias", {3 * d}, zeros(3 * d));
    put(ckpt, prefix + "proj.weight", {d, d}, zeros(d * d));
    put(ckpt, prefix + "proj.bias", {d}, zeros(d));
    put(ckpt, prefix + "ln2.gamma", {d}, ones(d));
    put(ckpt, prefix + "ln2.beta", {d}, zeros(d));

    std::vector<float> w1(static_cast<std::size_t>(d * hidden), 0.0f);
    std::vector<float> b1 = zeros(hidden);
    std::vector<float> w2(static_cast<std::size_t>(hidden * d), 0.0f);
    std::vector<float> b2 = zeros(d);
    if (classify) {
      // Unit pair 2e/2e+1 realizes U_e = min(relu(o0 - theta_e), width)
      // through GELU(slope*(o0 - theta_e)) - GELU(slope*(o0 - theta_e - width)).
      for (std::int64_t e = 1; e < kcls; ++e) {
        w1[0 * hidden + (2 * e)] = static_cast<float>(slope);
        b1[2 * e] = static_cast<float>(-slope * theta[e]);
        w1[0 * hidden + (2 * e + 1)] = static_cast<float>(slope);
        b1[2 * e + 1] = static_cast<float>(-slope * (theta[e] + width));
      }
      // logit_0 = width - U_1; logit_k = U_k - 2 U_{k+1}; logit_{K-1} = U_{K-1}.
      auto add_u = [&](std::int64_t edge, std::int64_t channel, double f) {
        w2[(2 * edge) * d + channel] += static_cast<float>(f * amp / slope);
        w2[(2 * edge + 1) * d + channel] -= static_cast<float>(f * amp / slope);
      };
      b2[2 + 0] = static_cast<float>(amp * width);
      add_u(1, 2 + 0, -1.0);
      for (std::int64_t k = 1; k < kcls; ++k) {
        add_u(k, 2 + k, 1.0);
        if (k + 1 < kcls) add_u(k + 1, 2 + k, -2.0);
      }
    }
    put(ckpt, prefix + "fc1.weight", {d, hidden}, std::move(w1));
    put(ckpt, prefix + "fc1.bias", {hidden}, std::move(b1));
    put(ckpt, prefix + "fc2.weight", {hidden, d}, std::move(w2));
    put(ckpt, prefix + "fc2.bias", {d}, std::move(b2));
  };

  for (std::int64_t i = 0; i < config.enc_depth; ++i)
    block("enc" + std::to_string(i) + ".", i == 0);
  for (std::int64_t i = 0; i < config.dec_depth; ++i)
    block("dec" + std::to_string(i) + ".", false);
  return ckpt;
}

Checkpoint make_random_checkpoint(const ModelConfig& config,
                                  std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(seed);
  auto normal = [&rng](double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    return dist(rng);
  };
  auto tensor = [&](std::int64_t n, double sigma) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<float>(normal(sigma));
    return v;
  };

  const std::int64_t d = config.embed_dim;
  const std::int64_t hidden = config.hidden_dim();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.mode = Mode::kFp32;

  put(ckpt, "patch_embed.weight", {config.patch_dim(), d},
      tensor(config.patch_dim() * d, 0.8 / std::sqrt(double(config.patch_dim()))));
  put(ckpt, "patch_embed.bias", {d}, tensor(d, 0.02));
  put(ckpt, "pos_embed", {config.tokens(), d}, tensor(config.tokens() * d, 0.3));
  put(ckpt, "cls_embed", {config.classes, d}, tensor(config.classes * d, 0.5));
  put(ckpt, "proj_patch.weight", {d, d}, tensor(d * d, 1.0 / std::sqrt(double(d))));
  put(ckpt, "proj_cls.weight", {d, d}, tensor(d * d, 1.0 / std::sqrt(double(d))));

  auto block = [&](const std::string& prefix) {
    std::vector<float> gamma(static_cast<std::size_t>(d));
    for (auto& g : gamma) g = static_cast<float>(1.0 + normal(0.1));
    put(ckpt, prefix + "ln1.gamma", {d}, gamma);
    put(ckpt, prefix + "ln1.beta", {d}, tensor(d, 0.05));
    put(ckpt, prefix + "qkv.weight", {d, 3 * d},
        tensor(d * 3 * d, 0.8 / std::sqrt(double(d))));
    put(ckpt, prefix + "qkv.bias", {3 * d}, tensor(3 * d, 0.02));
    put(ckpt, prefix + "proj.weight", {d, d}, tensor(d * d, 0.8 / std::sqrt(double(d))));
    put(ckpt, prefix + "proj.bias", {d}, tensor(d, 0.02));
    std::vector<float> gamma2(static_cast<std::size_t>(d));
    for (auto& g : gamma2) g = static_cast<float>(1.0 + normal(0.1));
    put(ckpt, prefix + "ln2.gamma", {d}, gamma2);
    put(ckpt, prefix + "ln2.beta", {d}, tensor(d, 0.05));
    put(ckpt, prefix + "fc1.weight", {d, hidden},
        tensor(d * hidden, 0.8 / std::sqrt(double(d))));
    put(ckpt, prefix + "fc1.bias", {hidden}, tensor(hidden, 0.02));
    put(ckpt, prefix + "fc2.weight", {hidden, d},
        tensor(hidden * d, 0.8 / std::sqrt(double(hidden))));
    put(ckpt, prefix + "fc2.bias", {d}, tensor(d, 0.02));
  };
  for (std::int64_t i = 0; i < config.enc_depth; ++i)
    block("enc" + std::to_string(i) + ".");
  for (std::int64_t i = 0; i < config.dec_depth; ++i)
    block("dec" + std::to_string(i) + ".");
  return ckpt;
}

Checkpoint make_longtail_checkpoint(const ModelConfig& config,
                                    std::uint64_t seed) {
  Checkpoint ckpt = make_random_checkpoint(config, seed);
  std::mt19937_64 rng(seed ^ 0xabcdef123456ULL);
  const std::int64_t hidden = config.hidden_dim();
  const std::int64_t d = config.embed_dim;
  const std::int64_t outliers = std::max<std::int64_t>(hidden / 32, 2);
  std::uniform_int_distribution<std::int64_t> pick(0, hidden - 1);
  std::uniform_real_distribution<double> gain(10.0, 18.0);

  auto amplify = [&](const std::string& prefix) {
    TensorEntry& w = ckpt.tensors.at(prefix + "fc1.weight");
    TensorEntry& b = ckpt.tensors.at(prefix + "fc1.bias");
    for (std::int64_t o = 0; o < outliers; ++o) {
      const std::int64_t col = pick(rng);
      const double g = gain(rng);
      for (std::int64_t i = 0; i < d; ++i)
        w.f32[i * hidden + col] *= static_cast<float>(g);
      b.f32[col] *= static_cast<float>(g);
    }
  };
  for (std::int64_t i = 0; i < config.enc_depth; ++i)
    amplify("enc" + std::to_string(i) + ".");
  for (std::int64_t i = 0; i < config.dec_depth; ++i)
    amplify("dec" + std::to_string(i) + ".");
  return ckpt;
}

}  // namespace iseg
