#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace iseg {

// Error classes surfaced by the library and reported by name from the CLI.
enum class Errc {
  kInvalidThreshold,
  kInvalidInput,
  kFrozenObserver,
  kNotCalibrated,
  kScaleOverflow,
  kOverflow,
  kDivisionDomain,
  kShapeMismatch,
  kCheckpointInconsistency,
  kModeMismatch,
  kIoError,
  kBadArgument,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

// Rational scale b / 2^c. The only representation of real scale factors the
// integer inference path ever sees; b == 0 marks the degenerate zero scale of
// an all-zero tensor.
struct DyadicScale {
  std::int64_t b = 0;
  int c = 0;

  double value() const noexcept { return std::ldexp(static_cast<double>(b), -c); }
  bool is_zero() const noexcept { return b == 0; }

  friend bool operator==(const DyadicScale& x, const DyadicScale& y) noexcept {
    return x.b == y.b && x.c == y.c;
  }
};

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

// Signed saturation limits: the representable range is symmetric,
// [-(2^(k-1)-1), 2^(k-1)-1], so negation never overflows.
inline std::int64_t qmax(int width) {
  return (std::int64_t{1} << (width - 1)) - 1;
}
inline std::int64_t qmin(int width) { return -qmax(width); }

inline bool valid_width(int width) {
  return width == 8 || width == 16 || width == 32;
}

// Integer tensor: payload held widened to 32-bit, `width` is the logical
// bit-width every element must respect.
struct QuantizedTensor {
  std::vector<std::int32_t> data;
  Shape shape;
  int width = 8;
  DyadicScale scale;

  std::int64_t size() const noexcept {
    return static_cast<std::int64_t>(data.size());
  }
};

// Real-valued tensor used by the FP32 reference path and calibration.
struct TensorF {
  std::vector<float> data;
  Shape shape;

  std::int64_t size() const noexcept {
    return static_cast<std::int64_t>(data.size());
  }
};

inline void check_shape_data(const Shape& shape, std::size_t n,
                             const char* what) {
  if (numel(shape) != static_cast<std::int64_t>(n))
    fail(Errc::kShapeMismatch, std::string(what) + ": shape does not match payload");
}

// Bit-width and dyadic mantissa precision of a quantization site.
struct QuantSpec {
  int k = 8;
  int p = 15;
};

inline void validate(const QuantSpec& spec) {
  if (!valid_width(spec.k)) fail(Errc::kBadArgument, "bit-width must be 8, 16 or 32");
  if (spec.p < 2 || spec.p > 30) fail(Errc::kBadArgument, "dyadic precision out of range");
}

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace iseg
