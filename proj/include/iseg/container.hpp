#pragma once

#include <string>
#include <vector>

#include "iseg/model.hpp"

namespace iseg {

// Binary checkpoint container. Layout:
//   magic "ISEG", version byte,
//   u32 length + key=value config text,
//   u32 tensor count, then per tensor:
//     u32 name length + UTF-8 name,
//     u8 dtype (0 FP32, 1 INT8, 2 INT16, 3 INT32),
//     u8 rank, rank x i32 dims,
//     u8 scale flag, if set: i64 b, u8 c,
//     raw little-endian payload.
// INT-mode files never contain dtype-0 tensors.
void write_container(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_container(const std::string& path);

std::vector<unsigned char> serialize_container(const Checkpoint& ckpt);
Checkpoint deserialize_container(const std::vector<unsigned char>& bytes);

// Single-tensor FP32 file sharing the container grammar (kind=tensor).
void write_tensor_file(const std::string& path, const TensorF& tensor);
TensorF read_tensor_file(const std::string& path);

// P5 (binary) PGM with maxval 255; P2 is accepted on read.
void write_pgm(const std::string& path, std::span<const int> values,
               std::int64_t height, std::int64_t width);
std::vector<int> read_pgm(const std::string& path, std::int64_t* height,
                          std::int64_t* width);

// Image ingestion: .iseg tensor files are used as-is; 8-bit PGM pixels get
// the configured mean subtracted.
TensorF load_image(const std::string& path, const ModelConfig& config);

// Bytes of the tensor table grouped by dtype code.
struct SizeReport {
  std::int64_t payload_bytes[4] = {0, 0, 0, 0};
  std::int64_t total_file_bytes = 0;
};
SizeReport container_sizes(const Checkpoint& ckpt);

}  // namespace iseg
