#include "iseg/trace.hpp"

namespace iseg {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear: return "Linear";
    case LayerKind::kConv: return "Conv";
    case LayerKind::kMatMul: return "MatMul";
  }
  return "?";
}

std::int64_t TraceMeters::total_bits() const {
  std::int64_t total = 0;
  for (const auto& t : traffic) total += t.bits_read + t.bits_written;
  return total;
}

std::int64_t TraceMeters::total_fp32_equivalent_bits() const {
  std::int64_t total = 0;
  for (const auto& t : traffic) total += 32 * (t.elems_read + t.elems_written);
  return total;
}

void meter_matmul(TraceMeters* meters, LayerKind kind, std::int64_t m,
                  std::int64_t k, std::int64_t n, int w_a, int w_b, int w_bias,
                  int w_out) {
  if (meters == nullptr) return;
  KindTraffic& t = meters->kind(kind);
  const std::int64_t in_elems = m * k;
  const std::int64_t w_elems = k * n;
  const std::int64_t out_elems = m * n;
  t.elems_read += in_elems + w_elems;
  t.bits_read += in_elems * w_a + w_elems * w_b;
  if (w_bias > 0) {
    t.elems_read += n;
    t.bits_read += n * w_bias;
  }
  // The 32-bit accumulator is written once, then the requantized tensor.
  t.elems_written += 2 * out_elems;
  t.bits_written += out_elems * 32 + out_elems * w_out;
}

TrafficReport traffic_report(const TraceMeters& meters) {
  TrafficReport report;
  for (int i = 0; i < 3; ++i) {
    const KindTraffic& t = meters.traffic[i];
    report.per_kind[i].bits_read = t.bits_read;
    report.per_kind[i].bits_written = t.bits_written;
    report.per_kind[i].fp32_bits_read = 32 * t.elems_read;
    report.per_kind[i].fp32_bits_written = 32 * t.elems_written;
  }
  report.total_bits = meters.total_bits();
  report.fp32_equivalent_bits = meters.total_fp32_equivalent_bits();
  report.ratio = report.total_bits > 0
                     ? static_cast<double>(report.fp32_equivalent_bits) /
                           static_cast<double>(report.total_bits)
                     : 0.0;
  return report;
}

}  // namespace iseg
