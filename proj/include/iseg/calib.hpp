#pragma once

#include <map>
#include <string>
#include <vector>

#include "iseg/model.hpp"
#include "iseg/reference.hpp"

namespace iseg {

// Settings of one PTQ run: EMA momentum, sample budget, and the shift-GELU
// parameters baked into the produced checkpoint.
struct CalibrationPlan {
  double alpha = 0.05;
  int samples = 1;
  GeluConfig gelu;
};

// One observer per activation site of the graph.
SiteObservers make_observers(const ModelConfig& config, double alpha);

// Freeze every observer; names any that never saw data.
void freeze_observers(SiteObservers& observers);

// Symmetric per-tensor weight quantization with the exact max-magnitude
// threshold (weights are static, so no EMA).
QuantizedTensor quantize_weight(const std::vector<float>& values, Shape shape,
                                int p = kDyadicBits);

// Integer bias at a bound scale: payload = round(value / scale).
QuantizedTensor quantize_bias(const std::vector<float>& values, Shape shape,
                              const DyadicScale& scale);

// Stream calibration samples through the FP32 graph, freeze the observers,
// convert weights/biases/embeddings, and emit the INT checkpoint.
Checkpoint calibrate(const Checkpoint& fp32_ckpt,
                     const std::vector<TensorF>& stream,
                     const CalibrationPlan& plan);

}  // namespace iseg
