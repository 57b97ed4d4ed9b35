#pragma once

#include <cstdint>
#include <string>

#include "iseg/model.hpp"

namespace iseg {

// Desk-scale synthetic segmentation data: smooth random intensity fields
// with block-wise class labels derived from intensity levels.
struct SynthSpec {
  int n = 4;
  int classes = 4;
  std::int64_t size = 64;
  std::int64_t patch = 8;
  std::uint64_t seed = 1;
};

struct SynthSample {
  TensorF image;           // [size x size x 1], values in [0, classes)
  std::vector<int> label;  // size*size entries < classes
};

SynthSample synth_sample(const SynthSpec& spec, int index);

// Writes img_%04d.iseg / label_%04d.pgm pairs into dir.
void generate_dataset(const std::string& dir, const SynthSpec& spec);

// FP32 checkpoint with hand-built weights that segment the synthetic data:
// patch mean intensity is bucketed into class channels by the MLP of the
// first encoder block; the remaining blocks pass tokens through.
Checkpoint make_structured_checkpoint(const ModelConfig& config);

// FP32 checkpoint with seeded random weights of benign magnitude.
Checkpoint make_random_checkpoint(const ModelConfig& config,
                                  std::uint64_t seed);

// Random checkpoint whose fc1 layers contain a few amplified output
// columns, producing long-tailed pre-GELU activations with per-row
// positive outliers.
Checkpoint make_longtail_checkpoint(const ModelConfig& config,
                                    std::uint64_t seed);

}  // namespace iseg
