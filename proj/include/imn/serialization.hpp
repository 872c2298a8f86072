#pragma once

// Binary formats. All integers and floats are little-endian.
//
// Checkpoint:
//   "IMN1"                      magic
//   u16                         format version (1)
//   u32 blocks, u32 image_channels, u32 growth, f32 clamp
//   f64 x3 lambdas, u64 iterations, u32 tag length, tag bytes   (provenance)
//   u32 parameter count
//   per parameter: u32 name length, name bytes, u32 x4 shape, f32 values
//   u32 CRC-32 of every preceding byte
//
// Tensor file (lost information m):
//   u32 x4 shape (B, C, H, W), then B*C*H*W f32 values

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "imn/network.hpp"
#include "imn/tensor.hpp"

namespace imn {

inline constexpr char kCheckpointMagic[4] = {'I', 'M', 'N', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(take(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw CorruptFileError("unexpected end of data");
  }
  std::uint64_t take(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace detail

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large buffers
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <std::floating_point T>
std::vector<std::uint8_t> encode_checkpoint(const IMNModel<T>& model) {
  detail::ByteWriter w;
  w.raw(std::string_view(kCheckpointMagic, 4));
  w.u16(kCheckpointVersion);
  const ModelConfig& c = model.config();
  w.u32(static_cast<std::uint32_t>(c.blocks));
  w.u32(static_cast<std::uint32_t>(c.image_channels));
  w.u32(static_cast<std::uint32_t>(c.growth));
  w.f32(static_cast<float>(c.clamp));
  const Provenance& prov = model.provenance();
  for (double l : prov.lambdas) w.f64(l);
  w.u64(prov.iterations);
  w.u32(static_cast<std::uint32_t>(prov.dataset_tag.size()));
  w.raw(prov.dataset_tag);

  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.raw(p->name);
    const Shape& s = p->tensor.shape();
    for (std::size_t d : {s.batch, s.channels, s.height, s.width}) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p->tensor.values()) w.f32(static_cast<float>(v));
  }
  w.u32(crc32_of(w.bytes().data(), w.bytes().size()));
  return std::move(w.bytes());
}

template <std::floating_point T = float>
IMNModel<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 2 + 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw CorruptFileError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 4;
  detail::ByteReader tail(bytes.data() + body, 4);
  if (tail.u32() != crc32_of(bytes.data(), body)) throw CorruptFileError("checkpoint CRC mismatch");

  detail::ByteReader r(bytes.data() + 4, body - 4);
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw CorruptFileError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig config;
  config.blocks = r.u32();
  config.image_channels = r.u32();
  config.growth = r.u32();
  config.clamp = static_cast<double>(r.f32());
  try {
    config.validate();
  } catch (const Error& e) {
    throw CorruptFileError(std::string("invalid checkpoint hyperparameters: ") + e.what());
  }
  Provenance prov;
  for (double& l : prov.lambdas) l = r.f64();
  prov.iterations = r.u64();
  prov.dataset_tag = r.str(r.u32());

  IMNModel<T> model(config);
  model.provenance() = prov;
  auto params = model.parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw CorruptFileError("checkpoint holds " + std::to_string(count) + " parameters, architecture needs " +
                           std::to_string(params.size()));
  for (auto* p : params) {
    const std::string name = r.str(r.u32());
    if (name != p->name) throw CorruptFileError("unexpected parameter '" + name + "', expected '" + p->name + "'");
    Shape s;
    s.batch = r.u32();
    s.channels = r.u32();
    s.height = r.u32();
    s.width = r.u32();
    if (s != p->tensor.shape())
      throw CorruptFileError("parameter " + name + " has shape " + s.str() + ", expected " + p->tensor.shape().str());
    for (auto& v : p->tensor.mutable_values()) {
      const float f = r.f32();
      if (!std::isfinite(f)) throw CorruptFileError("non-finite value in parameter " + name);
      v = static_cast<T>(f);
    }
  }
  if (r.remaining() != 0) throw CorruptFileError("trailing bytes after parameter table");
  return model;
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const IMNModel<T>& model) {
  detail::write_file(path, encode_checkpoint(model));
}

template <std::floating_point T = float>
IMNModel<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(detail::read_file(path));
}

template <std::floating_point T>
void save_tensor_file(const std::filesystem::path& path, const Tensor<T>& t) {
  detail::ByteWriter w;
  const Shape& s = t.shape();
  for (std::size_t d : {s.batch, s.channels, s.height, s.width}) w.u32(static_cast<std::uint32_t>(d));
  for (T v : t.values()) w.f32(static_cast<float>(v));
  detail::write_file(path, w.bytes());
}

template <std::floating_point T = float>
Tensor<T> load_tensor_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  Shape s;
  try {
    s.batch = r.u32();
    s.channels = r.u32();
    s.height = r.u32();
    s.width = r.u32();
  } catch (const CorruptFileError&) {
    throw IoError("tensor file " + path.string() + " is truncated");
  }
  if (r.remaining() != s.numel() * 4)
    throw IoError("tensor file " + path.string() + " holds " + std::to_string(r.remaining()) +
                  " value bytes, shape " + s.str() + " needs " + std::to_string(s.numel() * 4));
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(r.f32());
  return Tensor<T>(s, std::move(v));
}

}  // namespace imn
