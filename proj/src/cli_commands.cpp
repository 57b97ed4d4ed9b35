#include "iseg/cli_commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "iseg/calib.hpp"
#include "iseg/container.hpp"
#include "iseg/reference.hpp"
#include "iseg/synth.hpp"

namespace iseg {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> list_prefixed(const std::string& dir,
                                       const std::string& prefix,
                                       const std::string& suffix) {
  if (!fs::is_directory(dir)) fail(Errc::kIoError, "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::vector<TensorF> load_images(const std::string& dir,
                                 const ModelConfig& config, int count) {
  const std::vector<std::string> paths = list_images(dir);
  if (paths.empty()) fail(Errc::kIoError, "no images under " + dir);
  if (count > 0 && static_cast<int>(paths.size()) < count)
    fail(Errc::kIoError, "requested " + std::to_string(count) + " samples, " +
                             std::to_string(paths.size()) + " available");
  const int n = count > 0 ? count : static_cast<int>(paths.size());
  std::vector<TensorF> images;
  images.reserve(n);
  for (int i = 0; i < n; ++i) images.push_back(load_image(paths[i], config));
  return images;
}

struct VariantRow {
  std::string name;
  Fp32Variant variant;
};

const VariantRow kVariantGrid[] = {
    {"nearest_no_l2", {false, Interp::kNearest, GeluKind::kExact}},
    {"nearest_l2", {true, Interp::kNearest, GeluKind::kExact}},
    {"bilinear_no_l2", {false, Interp::kBilinear, GeluKind::kExact}},
    {"bilinear_l2", {true, Interp::kBilinear, GeluKind::kExact}},
};

}  // namespace

std::vector<std::string> list_images(const std::string& dir) {
  return list_prefixed(dir, "img_", ".iseg");
}

std::vector<std::string> list_labels(const std::string& dir) {
  return list_prefixed(dir, "label_", ".pgm");
}

int cmd_synth(const SynthArgs& args) {
  SynthSpec spec;
  spec.n = args.n;
  spec.classes = args.classes;
  spec.size = args.size;
  spec.patch = args.patch;
  spec.seed = args.seed;
  generate_dataset(args.out_dir, spec);
  std::cout << "wrote " << args.n << " image/label pairs to " << args.out_dir
            << "\n";
  if (!args.model_out.empty()) {
    ModelConfig config;
    config.image_h = config.image_w = args.size;
    config.patch = args.patch;
    config.classes = args.classes;
    config.embed_dim = args.embed_dim;
    config.enc_depth = args.enc_depth;
    config.heads = args.heads;
    write_container(args.model_out, make_structured_checkpoint(config));
    std::cout << "wrote structured FP32 model to " << args.model_out << "\n";
  }
  return 0;
}

int cmd_calibrate(const CalibrateArgs& args) {
  const Checkpoint fp32 = read_container(args.model);
  if (fp32.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "calibration input must be an FP32 container");
  const std::vector<TensorF> stream =
      load_images(args.data_dir, fp32.config, args.samples);

  CalibrationPlan plan;
  plan.alpha = args.alpha;
  plan.samples = args.samples;
  plan.gelu = fp32.config.gelu;
  plan.gelu.lambda = args.lambda;
  plan.gelu.k_inter = args.k_inter;

  const auto t0 = std::chrono::steady_clock::now();
  const Checkpoint intck = calibrate(fp32, stream, plan);
  const auto t1 = std::chrono::steady_clock::now();
  write_container(args.out, intck);

  const double secs = std::chrono::duration<double>(t1 - t0).count();
  const auto in_size = fs::file_size(args.model);
  const auto out_size = fs::file_size(args.out);
  std::printf("calibration time: %.3f s (%d samples, alpha %.3f)\n", secs,
              args.samples, args.alpha);
  std::printf("container size: %ju -> %ju bytes (%.2fx smaller)\n",
              static_cast<std::uintmax_t>(in_size),
              static_cast<std::uintmax_t>(out_size),
              double(in_size) / double(out_size));
  return 0;
}

int cmd_infer(const InferArgs& args) {
  const Checkpoint ckpt = read_container(args.model);
  const bool want_int = args.mode == "int" ||
                        (args.mode == "auto" && ckpt.mode == Mode::kInt);
  if (want_int && ckpt.mode != Mode::kInt)
    fail(Errc::kModeMismatch, "FP32 container passed to INT inference");
  if (!want_int && ckpt.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "INT container passed to FP32 inference");

  const TensorF image = load_image(args.input, ckpt.config);
  std::vector<int> map;
  Checkpoint logits_out;
  logits_out.config = ckpt.config;
  if (want_int) {
    TraceMeters meters;
    const QuantizedTensor input = quantize_input(image, ckpt);
    const ForwardResult result = forward(input, ckpt, &meters);
    map = result.class_map;
    if (args.trace_fp_ops) {
      std::printf("fp_ops: %lld\n", static_cast<long long>(meters.fp_ops));
      if (meters.fp_ops != 0)
        fail(Errc::kModeMismatch, "integer forward performed fp ops");
    }
    logits_out.mode = Mode::kInt;
    logits_out.tensors.emplace("logits", TensorEntry::quant(result.logits));
  } else {
    const Fp32Result result =
        fp32_forward(image, ckpt, Fp32Variant{}, nullptr, nullptr);
    map = result.class_map;
    logits_out.mode = Mode::kFp32;
    logits_out.tensors.emplace(
        "logits", TensorEntry::fp32(result.logits.shape, result.logits.data));
  }
  write_pgm(args.out_map, map, ckpt.config.image_h, ckpt.config.image_w);
  if (!args.out_logits.empty()) write_container(args.out_logits, logits_out);
  std::cout << "wrote class map to " << args.out_map << "\n";
  return 0;
}

int cmd_compare(const CompareArgs& args) {
  const Checkpoint ref = read_container(args.ref_model);
  if (ref.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "reference container must be FP32");
  const Checkpoint test = read_container(args.test_model);
  const std::vector<TensorF> images =
      load_images(args.data_dir, ref.config, args.samples);
  std::vector<std::vector<int>> labels;
  if (!args.labels_dir.empty()) {
    const std::vector<std::string> paths = list_labels(args.labels_dir);
    for (std::size_t i = 0; i < images.size() && i < paths.size(); ++i) {
      std::int64_t h = 0, w = 0;
      labels.push_back(read_pgm(paths[i], &h, &w));
    }
  }

  struct Accum {
    std::vector<TensorF> acts;
    double cosine = 0.0, agree = 0.0, miou_sum = 0.0;
    int miou_n = 0;
  };
  Accum variant_acc[4];
  std::vector<TensorF> test_acts;
  double test_miou_sum = 0.0;
  int test_miou_n = 0;
  std::vector<std::vector<int>> variant_maps(4);
  const int kcls = static_cast<int>(ref.config.classes);

  for (std::size_t s = 0; s < images.size(); ++s) {
    Fp32Result vres[4];
    for (int v = 0; v < 4; ++v)
      vres[v] = fp32_forward(images[s], ref, kVariantGrid[v].variant);

    std::vector<int> tmap;
    TensorF tlogits;
    std::vector<TensorF> tacts;
    if (test.mode == Mode::kInt) {
      ActivationTrace trace;
      const ForwardResult r =
          forward(quantize_input(images[s], test), test, nullptr, &trace);
      tmap = r.class_map;
      tlogits = dequantize_f(r.logits);
      tacts = trace.post_gelu;
    } else {
      const Fp32Result r = fp32_forward(images[s], test, Fp32Variant{});
      tmap = r.class_map;
      tlogits = r.logits;
      tacts = r.post_gelu;
    }
    append_blocks(test_acts, tacts);

    for (int v = 0; v < 4; ++v) {
      append_blocks(variant_acc[v].acts, vres[v].post_gelu);
      variant_acc[v].cosine += logit_cosine(tlogits, vres[v].logits);
      variant_acc[v].agree += agreement(tmap, vres[v].class_map);
      if (s < labels.size()) {
        variant_acc[v].miou_sum +=
            miou(vres[v].class_map, labels[s], kcls).mean;
        ++variant_acc[v].miou_n;
      }
    }
    if (s < labels.size()) {
      test_miou_sum += miou(tmap, labels[s], kcls).mean;
      ++test_miou_n;
    }
  }

  std::ofstream csv(args.out_csv);
  if (!csv) fail(Errc::kIoError, "cannot open for writing: " + args.out_csv);
  csv << "variant,interp,l2_norm,gelu,rmse_g,logit_cosine,agreement,miou\n";
  const double n = static_cast<double>(images.size());
  char line[256];
  for (int v = 0; v < 4; ++v) {
    const FidelityReport fr = rmse_g(variant_acc[v].acts, test_acts);
    const double mi = variant_acc[v].miou_n > 0
                          ? variant_acc[v].miou_sum / variant_acc[v].miou_n
                          : 0.0;
    std::snprintf(line, sizeof(line), "%s,%s,%s,exact,%.6g,%.6f,%.6f,%.6f\n",
                  kVariantGrid[v].name.c_str(),
                  kVariantGrid[v].variant.interp == Interp::kBilinear
                      ? "bilinear"
                      : "nearest",
                  kVariantGrid[v].variant.l2_norm ? "yes" : "no", fr.rmse_g,
                  variant_acc[v].cosine / n, variant_acc[v].agree / n, mi);
    csv << line;
    std::cout << line;
  }
  const double test_mi = test_miou_n > 0 ? test_miou_sum / test_miou_n : 0.0;
  std::snprintf(line, sizeof(line), "test,nearest,no,%s,,,,%0.6f\n",
                test.mode == Mode::kInt ? "lambda_shift" : "exact", test_mi);
  csv << line;
  std::cout << line;
  return 0;
}

int cmd_ablate_gelu(const AblateArgs& args) {
  const Checkpoint fp32 = read_container(args.model);
  if (fp32.mode != Mode::kFp32)
    fail(Errc::kModeMismatch, "ablation input must be an FP32 container");
  const std::vector<TensorF> images =
      load_images(args.data_dir, fp32.config, args.samples);

  // Reference activations: the sigmoid-form GELU the shift kernels target.
  std::vector<TensorF> ref_acts;
  for (const TensorF& image : images) {
    const Fp32Result r = fp32_forward(
        image, fp32, Fp32Variant{false, Interp::kNearest, GeluKind::kExact});
    append_blocks(ref_acts, r.post_gelu);
  }

  std::ofstream csv(args.out_csv);
  if (!csv) fail(Errc::kIoError, "cannot open for writing: " + args.out_csv);
  csv << "gelu,lambda,rmse_g\n";
  const int lambdas[2] = {1, fp32.config.gelu.lambda};
  double results[2] = {0.0, 0.0};
  for (int i = 0; i < 2; ++i) {
    CalibrationPlan plan;
    plan.alpha = args.alpha;
    plan.samples = static_cast<int>(images.size());
    plan.gelu = fp32.config.gelu;
    plan.gelu.lambda = lambdas[i];
    const Checkpoint intck = calibrate(fp32, images, plan);
    std::vector<TensorF> acts;
    for (const TensorF& image : images) {
      ActivationTrace trace;
      forward(quantize_input(image, intck), intck, nullptr, &trace);
      append_blocks(acts, trace.post_gelu);
    }
    results[i] = rmse_g(ref_acts, acts).rmse_g;
    char line[128];
    std::snprintf(line, sizeof(line), "%s,%d,%.6g\n",
                  i == 0 ? "shift_baseline" : "lambda_shift", lambdas[i],
                  results[i]);
    csv << line;
    std::cout << line;
  }
  std::printf("rmse ratio (lambda=%d / lambda=1): %.4f\n",
              fp32.config.gelu.lambda,
              results[0] > 0 ? results[1] / results[0] : 0.0);
  return 0;
}

int cmd_stats(const StatsArgs& args) {
  const Checkpoint ckpt = read_container(args.model);
  const SizeReport sizes = container_sizes(ckpt);
  static const char* kDtypeNames[4] = {"fp32", "int8", "int16", "int32"};
  std::printf("container: %s (%s mode)\n", args.model.c_str(),
              ckpt.mode == Mode::kInt ? "int" : "fp32");
  for (int d = 0; d < 4; ++d)
    if (sizes.payload_bytes[d] > 0)
      std::printf("  %-5s payload: %lld bytes\n", kDtypeNames[d],
                  static_cast<long long>(sizes.payload_bytes[d]));
  std::printf("  total file:    %lld bytes\n",
              static_cast<long long>(sizes.total_file_bytes));

  // Analytic traffic of one forward pass at the configured input shape.
  TraceMeters meters;
  const ModelConfig& cfg = ckpt.config;
  TensorF zero;
  zero.shape = {cfg.image_h, cfg.image_w, cfg.channels};
  zero.data.assign(static_cast<std::size_t>(numel(zero.shape)), 0.0f);
  if (ckpt.mode == Mode::kInt) {
    forward(quantize_input(zero, ckpt), ckpt, &meters);
  } else {
    fp32_forward(zero, ckpt, Fp32Variant{}, &meters);
  }
  const TrafficReport report = traffic_report(meters);
  std::printf("traffic for one %lldx%lld forward:\n",
              static_cast<long long>(cfg.image_h),
              static_cast<long long>(cfg.image_w));
  for (int k = 0; k < 3; ++k) {
    const auto& row = report.per_kind[k];
    std::printf("  %-6s read %lld written %lld (fp32-equivalent %lld)\n",
                layer_kind_name(static_cast<LayerKind>(k)),
                static_cast<long long>(row.bits_read),
                static_cast<long long>(row.bits_written),
                static_cast<long long>(row.fp32_bits_read + row.fp32_bits_written));
  }
  std::printf("  total bits: %lld, fp32-equivalent: %lld, ratio %.3f\n",
              static_cast<long long>(report.total_bits),
              static_cast<long long>(report.fp32_equivalent_bits),
              report.ratio);
  std::printf("  fp_ops: %lld\n", static_cast<long long>(meters.fp_ops));
  return 0;
}

}  // namespace iseg
