#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iseg/model.hpp"

namespace iseg {

struct SynthArgs {
  std::string out_dir;
  int n = 4;
  int classes = 4;
  std::int64_t size = 64;
  std::int64_t patch = 8;
  std::uint64_t seed = 1;
  std::string model_out;  // optional structured FP32 checkpoint
  std::int64_t embed_dim = 32;
  std::int64_t enc_depth = 2;
  std::int64_t heads = 1;
};
int cmd_synth(const SynthArgs& args);

struct CalibrateArgs {
  std::string model;
  std::string data_dir;
  std::string out;
  int samples = 1;
  double alpha = 0.05;
  int lambda = 6;
  int k_inter = 23;
};
int cmd_calibrate(const CalibrateArgs& args);

struct InferArgs {
  std::string model;
  std::string input;
  std::string out_map;
  std::string out_logits;     // optional
  std::string mode = "auto";  // auto | int | fp32
  bool trace_fp_ops = false;
};
int cmd_infer(const InferArgs& args);

struct CompareArgs {
  std::string ref_model;   // FP32 container driving the variant grid
  std::string test_model;  // INT or FP32 container under test
  std::string data_dir;
  std::string labels_dir;  // optional; enables mIoU
  std::string out_csv;
  int samples = 0;  // 0 = all available
};
int cmd_compare(const CompareArgs& args);

struct AblateArgs {
  std::string model;  // FP32 container
  std::string data_dir;
  std::string out_csv;
  int samples = 1;
  double alpha = 0.05;
};
int cmd_ablate_gelu(const AblateArgs& args);

struct StatsArgs {
  std::string model;
};
int cmd_stats(const StatsArgs& args);

// Sorted img_*.iseg paths under dir.
std::vector<std::string> list_images(const std::string& dir);
std::vector<std::string> list_labels(const std::string& dir);

}  // namespace iseg
