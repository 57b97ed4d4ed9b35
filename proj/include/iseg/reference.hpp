#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "iseg/model.hpp"
#include "iseg/types.hpp"

namespace iseg {

enum class Interp { kNearest, kBilinear };
enum class GeluKind { kExact, kShiftBaseline, kLambdaShift };

// Decoder/activation toggles of the real-arithmetic reference model.
struct Fp32Variant {
  bool l2_norm = false;
  Interp interp = Interp::kNearest;
  GeluKind gelu = GeluKind::kExact;
};

// Sigmoid-form GELU x * sigma(1.702 x); the form the shift kernels target.
double gelu_sigmoid(double x);
// Exact GELU x * Phi(x).
double gelu_phi(double x);

TensorF gelu_ref(const TensorF& x);
TensorF softmax_ref(const TensorF& x);  // over the last axis
TensorF layernorm_ref(const TensorF& x, std::span<const float> gamma,
                      std::span<const float> beta, double eps = 1e-5);

// Half-pixel-center (align_corners = false) bilinear resize of [H x W x C].
TensorF bilinear_upsample_ref(const TensorF& x, std::int64_t out_h,
                              std::int64_t out_w);
TensorF nearest_upsample_ref(const TensorF& x, std::int64_t out_h,
                             std::int64_t out_w);

// Unit-normalize rows over the last axis; zero rows pass through unchanged.
TensorF l2_normalize_ref(const TensorF& x);

// Real-arithmetic idealization of the shift GELU: the shift-sum constants
// and the lambda clamp, without integer rounding.
TensorF shift_gelu_ref(const TensorF& x, int lambda, int k_inter);

using SiteObservers = std::map<std::string, RangeObserver>;

struct Fp32Result {
  std::vector<int> class_map;
  TensorF logits;       // [tokens x classes]
  TensorF encoder_out;  // [tokens x embed_dim]
  std::vector<TensorF> post_gelu;
};

// The same graph as the integer forward, in real arithmetic, with the
// selected variant; records post-GELU activations per block and feeds the
// observers when given.
Fp32Result fp32_forward(const TensorF& image, const Checkpoint& ckpt,
                        const Fp32Variant& variant,
                        TraceMeters* meters = nullptr,
                        SiteObservers* observers = nullptr);

struct FidelityReport {
  std::vector<double> per_block_rmse;
  double rmse_g = 0.0;
  std::int64_t blocks = 0;
  std::int64_t rows = 0;
  std::int64_t features = 0;
};

FidelityReport rmse_g(const std::vector<TensorF>& ref,
                      const std::vector<TensorF>& test);

// Concatenate per-block activations of another sample (rows appended).
void append_blocks(std::vector<TensorF>& dst, const std::vector<TensorF>& src);

struct MiouResult {
  std::vector<double> per_class;  // IoU where present, 0 elsewhere
  std::vector<bool> present;      // class occurs in pred or gt
  double mean = 0.0;
};

// Classes absent from both maps are excluded from the mean.
MiouResult miou(std::span<const int> pred, std::span<const int> gt, int classes);

double agreement(std::span<const int> a, std::span<const int> b);
double logit_cosine(const TensorF& a, const TensorF& b);

}  // namespace iseg
