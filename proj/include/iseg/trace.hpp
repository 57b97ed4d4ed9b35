#pragma once

#include <array>
#include <cstdint>

#include "iseg/types.hpp"

namespace iseg {

enum class LayerKind { kLinear = 0, kConv = 1, kMatMul = 2 };

const char* layer_kind_name(LayerKind kind);

struct KindTraffic {
  std::int64_t bits_read = 0;
  std::int64_t bits_written = 0;
  std::int64_t elems_read = 0;
  std::int64_t elems_written = 0;
};

// Counters attached to one forward pass: floating-point arithmetic events
// and analytic bit traffic of the Linear/Conv/MatMul layers.
struct TraceMeters {
  std::int64_t fp_ops = 0;
  std::array<KindTraffic, 3> traffic{};

  KindTraffic& kind(LayerKind k) { return traffic[static_cast<int>(k)]; }
  const KindTraffic& kind(LayerKind k) const {
    return traffic[static_cast<int>(k)];
  }

  std::int64_t total_bits() const;
  std::int64_t total_fp32_equivalent_bits() const;
};

// Accounting for one matmul/linear call: operands read in full, parameters
// once; the accumulator write and the requantized output write both count.
// w_bias = 0 means no bias operand.
void meter_matmul(TraceMeters* meters, LayerKind kind, std::int64_t m,
                  std::int64_t k, std::int64_t n, int w_a, int w_b, int w_bias,
                  int w_out);

struct TrafficReport {
  struct Row {
    std::int64_t bits_read = 0;
    std::int64_t bits_written = 0;
    std::int64_t fp32_bits_read = 0;
    std::int64_t fp32_bits_written = 0;
  };
  std::array<Row, 3> per_kind{};
  std::int64_t total_bits = 0;
  std::int64_t fp32_equivalent_bits = 0;
  double ratio = 0.0;  // fp32-equivalent / measured
};

// Per-kind and total bit traffic plus the FP32-equivalent baseline obtained
// by re-pricing every operand at 32 bits.
TrafficReport traffic_report(const TraceMeters& meters);

}  // namespace iseg
