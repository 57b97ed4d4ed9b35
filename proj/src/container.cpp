#include "iseg/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace iseg {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put_i32(std::vector<unsigned char>& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

void put_i64(std::vector<unsigned char>& out, std::int64_t v) {
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back((u >> (8 * i)) & 0xff);
}

void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Cursor {
  const std::vector<unsigned char>* bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes->size())
      fail(Errc::kIoError, "container truncated");
  }
  std::uint8_t u8() {
    need(1);
    return (*bytes)[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t((*bytes)[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t((*bytes)[pos + i]) << (8 * i);
    pos += 8;
    return static_cast<std::int64_t>(v);
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes->data() + pos), n);
    pos += n;
    return s;
  }
};

std::string config_text(const ModelConfig& c, Mode mode) {
  std::ostringstream os;
  os << "image_h=" << c.image_h << "\n"
     << "image_w=" << c.image_w << "\n"
     << "patch=" << c.patch << "\n"
     << "channels=" << c.channels << "\n"
     << "embed_dim=" << c.embed_dim << "\n"
     << "enc_depth=" << c.enc_depth << "\n"
     << "dec_depth=" << c.dec_depth << "\n"
     << "heads=" << c.heads << "\n"
     << "classes=" << c.classes << "\n"
     << "mlp_ratio=" << c.mlp_ratio << "\n"
     << "gelu_lambda=" << c.gelu.lambda << "\n"
     << "gelu_k_inter=" << c.gelu.k_inter << "\n"
     << "gelu_k_out=" << c.gelu.k_out << "\n"
     << "softmax_k_inter=" << c.softmax_k_inter << "\n"
     << "softmax_k_out=" << c.softmax_k_out << "\n"
     << "dyadic_bits=" << c.dyadic_bits << "\n"
     << "input_mean=" << c.input_mean << "\n"
     << "mode=" << (mode == Mode::kInt ? "int" : "fp32") << "\n";
  return os.str();
}

void parse_config(const std::string& text, ModelConfig* config, Mode* mode) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "image_h") config->image_h = std::stoll(value);
    else if (key == "image_w") config->image_w = std::stoll(value);
    else if (key == "patch") config->patch = std::stoll(value);
    else if (key == "channels") config->channels = std::stoll(value);
    else if (key == "embed_dim") config->embed_dim = std::stoll(value);
    else if (key == "enc_depth") config->enc_depth = std::stoll(value);
    else if (key == "dec_depth") config->dec_depth = std::stoll(value);
    else if (key == "heads") config->heads = std::stoll(value);
    else if (key == "classes") config->classes = std::stoll(value);
    else if (key == "mlp_ratio") config->mlp_ratio = std::stod(value);
    else if (key == "gelu_lambda") config->gelu.lambda = std::stoi(value);
    else if (key == "gelu_k_inter") config->gelu.k_inter = std::stoi(value);
    else if (key == "gelu_k_out") config->gelu.k_out = std::stoi(value);
    else if (key == "softmax_k_inter") config->softmax_k_inter = std::stoi(value);
    else if (key == "softmax_k_out") config->softmax_k_out = std::stoi(value);
    else if (key == "dyadic_bits") config->dyadic_bits = std::stoi(value);
    else if (key == "input_mean") config->input_mean = std::stod(value);
    else if (key == "mode" && mode != nullptr)
      *mode = (value == "int") ? Mode::kInt : Mode::kFp32;
  }
}

int dtype_size(int dtype) {
  switch (dtype) {
    case 1: return 1;
    case 2: return 2;
    default: return 4;
  }
}

}  // namespace

std::vector<unsigned char> serialize_container(const Checkpoint& ckpt) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'I', 'S', 'E', 'G'});
  out.push_back(1);  // version

  const std::string cfg = config_text(ckpt.config, ckpt.mode);
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());

  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, entry] : ckpt.tensors) {
    if (ckpt.mode == Mode::kInt && entry.dtype == 0)
      fail(Errc::kCheckpointInconsistency,
           "INT container may not hold FP32 tensors: " + name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<unsigned char>(entry.dtype));
    out.push_back(static_cast<unsigned char>(entry.shape.size()));
    for (std::int64_t d : entry.shape) put_i32(out, static_cast<std::int32_t>(d));
    out.push_back(entry.has_scale ? 1 : 0);
    if (entry.has_scale) {
      put_i64(out, entry.scale.b);
      out.push_back(static_cast<unsigned char>(entry.scale.c));
    }
    const std::int64_t n = numel(entry.shape);
    if (entry.dtype == 0) {
      if (static_cast<std::int64_t>(entry.f32.size()) != n)
        fail(Errc::kCheckpointInconsistency, "payload size mismatch: " + name);
      for (float v : entry.f32) put_f32(out, v);
    } else {
      if (static_cast<std::int64_t>(entry.qdata.size()) != n)
        fail(Errc::kCheckpointInconsistency, "payload size mismatch: " + name);
      for (std::int32_t v : entry.qdata) {
        if (entry.dtype == 1) {
          out.push_back(static_cast<unsigned char>(static_cast<std::int8_t>(v)));
        } else if (entry.dtype == 2) {
          const std::uint16_t u = static_cast<std::uint16_t>(
              static_cast<std::int16_t>(v));
          out.push_back(u & 0xff);
          out.push_back((u >> 8) & 0xff);
        } else {
          put_i32(out, v);
        }
      }
    }
  }
  return out;
}

Checkpoint deserialize_container(const std::vector<unsigned char>& bytes) {
  Cursor cur{&bytes};
  if (cur.str(4) != "ISEG") fail(Errc::kIoError, "bad container magic");
  if (cur.u8() != 1) fail(Errc::kIoError, "unsupported container version");

  Checkpoint ckpt;
  const std::uint32_t cfg_len = cur.u32();
  parse_config(cur.str(cfg_len), &ckpt.config, &ckpt.mode);

  const std::uint32_t count = cur.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = cur.u32();
    const std::string name = cur.str(name_len);
    TensorEntry entry;
    entry.dtype = cur.u8();
    if (entry.dtype > 3) fail(Errc::kIoError, "bad dtype code");
    if (ckpt.mode == Mode::kInt && entry.dtype == 0)
      fail(Errc::kCheckpointInconsistency,
           "INT container may not hold FP32 tensors: " + name);
    const int rank = cur.u8();
    entry.shape.resize(rank);
    for (int i = 0; i < rank; ++i) entry.shape[i] = cur.i32();
    entry.has_scale = cur.u8() != 0;
    if (entry.has_scale) {
      entry.scale.b = cur.i64();
      entry.scale.c = cur.u8();
    }
    const std::int64_t n = numel(entry.shape);
    if (n < 0) fail(Errc::kIoError, "negative dimension");
    if (entry.dtype == 0) {
      entry.f32.resize(n);
      for (std::int64_t i = 0; i < n; ++i) entry.f32[i] = cur.f32();
    } else {
      entry.qdata.resize(n);
      for (std::int64_t i = 0; i < n; ++i) {
        if (entry.dtype == 1) {
          entry.qdata[i] = static_cast<std::int8_t>(cur.u8());
        } else if (entry.dtype == 2) {
          const std::uint16_t lo = cur.u8();
          const std::uint16_t hi = cur.u8();
          entry.qdata[i] =
              static_cast<std::int16_t>(lo | (hi << 8));
        } else {
          entry.qdata[i] = cur.i32();
        }
      }
    }
    ckpt.tensors.emplace(name, std::move(entry));
  }
  return ckpt;
}

void write_container(const std::string& path, const Checkpoint& ckpt) {
  const std::vector<unsigned char> bytes = serialize_container(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::kIoError, "cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(Errc::kIoError, "write failed: " + path);
}

Checkpoint read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::kIoError, "cannot open: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return deserialize_container(bytes);
}

void write_tensor_file(const std::string& path, const TensorF& tensor) {
  Checkpoint file;
  file.mode = Mode::kFp32;
  file.tensors.emplace("image", TensorEntry::fp32(tensor.shape, tensor.data));
  write_container(path, file);
}

TensorF read_tensor_file(const std::string& path) {
  const Checkpoint file = read_container(path);
  const TensorEntry& e = file.at("image");
  if (e.dtype != 0) fail(Errc::kIoError, "tensor file must be FP32");
  TensorF out;
  out.shape = e.shape;
  out.data = e.f32;
  return out;
}

void write_pgm(const std::string& path, std::span<const int> values,
               std::int64_t height, std::int64_t width) {
  if (static_cast<std::int64_t>(values.size()) != height * width)
    fail(Errc::kShapeMismatch, "pgm payload does not match dimensions");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::kIoError, "cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  for (int v : values) {
    if (v < 0 || v > 255) fail(Errc::kInvalidInput, "pgm value out of range");
    os.put(static_cast<char>(v));
  }
  if (!os) fail(Errc::kIoError, "write failed: " + path);
}

std::vector<int> read_pgm(const std::string& path, std::int64_t* height,
                          std::int64_t* width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::kIoError, "cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P2") fail(Errc::kIoError, "not a PGM file");
  auto next_token = [&is]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    fail(Errc::kIoError, "truncated PGM header");
  };
  const std::int64_t w = std::stoll(next_token());
  const std::int64_t h = std::stoll(next_token());
  const std::int64_t maxval = std::stoll(next_token());
  if (maxval <= 0 || maxval > 255) fail(Errc::kIoError, "unsupported maxval");
  std::vector<int> values(static_cast<std::size_t>(w * h));
  if (magic == "P5") {
    is.get();  // single whitespace after maxval
    for (auto& v : values) {
      const int c = is.get();
      if (c == EOF) fail(Errc::kIoError, "truncated PGM payload");
      v = c;
    }
  } else {
    for (auto& v : values) {
      if (!(is >> v)) fail(Errc::kIoError, "truncated PGM payload");
    }
  }
  if (height != nullptr) *height = h;
  if (width != nullptr) *width = w;
  return values;
}

TensorF load_image(const std::string& path, const ModelConfig& config) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm") {
    std::int64_t h = 0, w = 0;
    const std::vector<int> pixels = read_pgm(path, &h, &w);
    TensorF image;
    image.shape = {h, w, 1};
    image.data.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
      image.data[i] = static_cast<float>(pixels[i] - config.input_mean);
    return image;
  }
  return read_tensor_file(path);
}

SizeReport container_sizes(const Checkpoint& ckpt) {
  SizeReport report;
  for (const auto& [name, entry] : ckpt.tensors)
    report.payload_bytes[entry.dtype] +=
        numel(entry.shape) * dtype_size(entry.dtype);
  report.total_file_bytes =
      static_cast<std::int64_t>(serialize_container(ckpt).size());
  return report;
}

}  // namespace iseg
