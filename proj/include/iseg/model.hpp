#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iseg/intkernels.hpp"
#include "iseg/qcore.hpp"
#include "iseg/trace.hpp"
#include "iseg/types.hpp"

namespace iseg {

struct ModelConfig {
  std::int64_t image_h = 64;
  std::int64_t image_w = 64;
  std::int64_t patch = 8;
  std::int64_t channels = 1;
  std::int64_t embed_dim = 32;
  std::int64_t enc_depth = 2;
  std::int64_t dec_depth = 2;
  std::int64_t heads = 1;
  std::int64_t classes = 2;
  double mlp_ratio = 4.0;
  GeluConfig gelu;
  int softmax_k_inter = 15;
  int softmax_k_out = 15;
  int dyadic_bits = kDyadicBits;
  double input_mean = 0.0;  // subtracted when ingesting 8-bit images

  std::int64_t tokens_h() const { return image_h / patch; }
  std::int64_t tokens_w() const { return image_w / patch; }
  std::int64_t tokens() const { return tokens_h() * tokens_w(); }
  std::int64_t head_dim() const { return embed_dim / heads; }
  std::int64_t hidden_dim() const {
    return static_cast<std::int64_t>(embed_dim * mlp_ratio + 0.5);
  }
  std::int64_t patch_dim() const { return patch * patch * channels; }
};

void validate(const ModelConfig& config);

enum class Mode { kFp32, kInt };

// One named tensor of a checkpoint. FP32 entries carry `f32`; integer
// entries carry `qdata` at `width` with a dyadic scale. Activation sites are
// stored as payload-free entries holding only their scale.
struct TensorEntry {
  int dtype = 0;  // 0 = FP32, 1 = INT8, 2 = INT16, 3 = INT32
  Shape shape;
  std::vector<float> f32;
  std::vector<std::int32_t> qdata;
  bool has_scale = false;
  DyadicScale scale;

  static TensorEntry fp32(Shape shape, std::vector<float> values);
  static TensorEntry quant(const QuantizedTensor& q);
  static TensorEntry site(const DyadicScale& scale);

  int width() const;
  QuantizedTensor as_quant() const;
};

struct Checkpoint {
  ModelConfig config;
  Mode mode = Mode::kFp32;
  std::map<std::string, TensorEntry> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const TensorEntry& at(const std::string& name) const;
  const DyadicScale& site_scale(const std::string& name) const;
};

// Parameter-tensor names of the graph (weights, biases, norms, embeddings).
std::vector<std::string> parameter_names(const ModelConfig& config);

// Activation-site names in forward order, each calibrated by one observer.
std::vector<std::string> activation_sites(const ModelConfig& config);

// Carrier width of an activation site (8 or 16).
int site_width(const std::string& site);

// Input-site feeding each weight tensor; binds bias scales at conversion.
std::string input_site_of(const ModelConfig& config, const std::string& weight);

// Width contract: INT checkpoints hold INT8 weights/embeddings, INT32
// biases, a scale on every entry, a scale entry per activation site and no
// FP32 payloads. Throws checkpoint-inconsistency on violation.
void validate_widths(const Checkpoint& ckpt);

// Crop window applied after upsampling to padded resolution.
struct PadInfo {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t height = 0;  // 0 means full frame
  std::int64_t width = 0;
};

// Dequantized per-block activations recorded after each GELU.
struct ActivationTrace {
  std::vector<TensorF> post_gelu;
};

struct ForwardResult {
  std::vector<int> class_map;  // image_h * image_w entries in [0, classes)
  QuantizedTensor logits;      // [tokens x classes] INT16
};

QuantizedTensor patch_embed(const QuantizedTensor& image,
                            const Checkpoint& ckpt, TraceMeters* meters);

QuantizedTensor encoder_forward(const QuantizedTensor& tokens,
                                const Checkpoint& ckpt, TraceMeters* meters,
                                ActivationTrace* trace = nullptr);

QuantizedTensor decoder_forward(const QuantizedTensor& z,
                                const Checkpoint& ckpt, TraceMeters* meters,
                                ActivationTrace* trace = nullptr);

std::vector<int> mask_refine(const QuantizedTensor& logits,
                             const ModelConfig& config, const PadInfo& pad);

ForwardResult forward(const QuantizedTensor& image, const Checkpoint& ckpt,
                      TraceMeters* meters, ActivationTrace* trace = nullptr);

// Quantize a raw image to the calibrated input site of an INT checkpoint.
QuantizedTensor quantize_input(const TensorF& image, const Checkpoint& ckpt);

}  // namespace iseg
