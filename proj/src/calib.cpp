#include "iseg/calib.hpp"

#include <algorithm>
#include <cmath>

namespace iseg {

SiteObservers make_observers(const ModelConfig& config, double alpha) {
  SiteObservers observers;
  for (const std::string& site : activation_sites(config))
    observers.emplace(site, RangeObserver(alpha));
  return observers;
}

void freeze_observers(SiteObservers& observers) {
  for (auto& [site, obs] : observers) {
    if (!obs.initialized())
      fail(Errc::kNotCalibrated, "site never exercised: " + site);
    obs.freeze();
  }
}

QuantizedTensor quantize_weight(const std::vector<float>& values, Shape shape,
                                int p) {
  double m = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) fail(Errc::kInvalidInput, "non-finite weight");
    m = std::max(m, std::abs(static_cast<double>(v)));
  }
  if (m == 0.0) m = kDegenerateThreshold;
  return quantize(values, std::move(shape), m, 8, p);
}

QuantizedTensor quantize_bias(const std::vector<float>& values, Shape shape,
                              const DyadicScale& scale) {
  QuantizedTensor q;
  q.shape = std::move(shape);
  q.width = 32;
  q.scale = scale;
  const double s = scale.value();
  const std::int64_t hi = qmax(32);
  q.data.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) fail(Errc::kInvalidInput, "non-finite bias");
    const std::int64_t v = std::llround(values[i] / s);
    q.data[i] = static_cast<std::int32_t>(std::clamp(v, -hi, hi));
  }
  return q;
}

Checkpoint calibrate(const Checkpoint& fp32_ckpt,
                     const std::vector<TensorF>& stream,
                     const CalibrationPlan& plan) {
  if (fp32_ckpt.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "calibration starts from an FP32 checkpoint");
  if (stream.empty()) fail(Errc::kInvalidInput, "empty calibration stream");
  validate(plan.gelu);
  validate(fp32_ckpt.config);

  SiteObservers observers = make_observers(fp32_ckpt.config, plan.alpha);
  const Fp32Variant variant{/*l2_norm=*/false, Interp::kNearest,
                            GeluKind::kExact};
  for (const TensorF& image : stream)
    fp32_forward(image, fp32_ckpt, variant, nullptr, &observers);
  freeze_observers(observers);

  Checkpoint out;
  out.config = fp32_ckpt.config;
  out.config.gelu = plan.gelu;
  out.mode = Mode::kInt;
  const int p = out.config.dyadic_bits;

  // Frozen thresholds become dyadic site scales; this is the only place
  // scale arithmetic runs in real numbers.
  for (const auto& [site, obs] : observers) {
    const double s = scale_from_threshold(obs.threshold(), site_width(site));
    out.tensors.emplace(site, TensorEntry::site(to_dyadic(s, p)));
  }
  out.tensors.emplace(
      "attn.inv_sqrt_head_dim",
      TensorEntry::site(to_dyadic(
          1.0 / std::sqrt(static_cast<double>(out.config.head_dim())), p)));

  for (const std::string& name : parameter_names(out.config)) {
    const TensorEntry& src = fp32_ckpt.at(name);
    if (src.dtype != 0)
      fail(Errc::kModeMismatch, "FP32 checkpoint holds integer tensor: " + name);
    if (name.ends_with(".bias")) continue;  // needs its weight's scale first
    if (name.ends_with(".beta")) continue;  // needs gamma's scale first
    out.tensors.emplace(name,
                        TensorEntry::quant(quantize_weight(src.f32, src.shape, p)));
  }
  for (const std::string& name : parameter_names(out.config)) {
    const TensorEntry& src = fp32_ckpt.at(name);
    if (name.ends_with(".bias")) {
      const std::string weight =
          name.substr(0, name.size() - 5) + ".weight";
      const DyadicScale s_w = out.at(weight).scale;
      const DyadicScale s_x =
          out.site_scale(input_site_of(out.config, weight));
      out.tensors.emplace(
          name, TensorEntry::quant(
                    quantize_bias(src.f32, src.shape, dyadic_mul(s_x, s_w, p))));
    } else if (name.ends_with(".beta")) {
      const std::string gamma =
          name.substr(0, name.size() - 5) + ".gamma";
      const DyadicScale s_g = out.at(gamma).scale;
      out.tensors.emplace(
          name, TensorEntry::quant(quantize_bias(
                    src.f32, src.shape,
                    DyadicScale{s_g.b, s_g.c + kNormShift})));
    }
  }

  validate_widths(out);
  return out;
}

}  // namespace iseg
