#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <system_error>
#include <vector>

#include "tcl/error.hpp"
#include "tcl/network.hpp"

namespace tcl {

// Checkpoint layout (all integers little-endian):
//   "TCLK"  magic
//   u8      format version
//   u8[3]   reserved, zero
//   u64     encoder width count, then that many u64 widths
//   u64     projector width count, then that many u64 widths
//   f64...  per layer (encoder first): weight row-major, then bias
//   u64     FNV-1a hash of every preceding byte
inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'C', 'L', 'K'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(data_[pos_ + k]) << (8 * k);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw CorruptFile("checkpoint ends early");
  }
  const std::uint8_t* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Network& net) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u8(kCheckpointVersion);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  for (const auto* widths : {&net.spec.encoder, &net.spec.projector}) {
    w.u64(widths->size());
    for (auto x : *widths) w.u64(x);
  }
  for (const auto* layers : {&net.encoder, &net.projector}) {
    for (const auto& d : *layers) {
      for (Eigen::Index r = 0; r < d.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.weight.cols(); ++c) w.f64(d.weight(r, c));
      }
      for (Eigen::Index r = 0; r < d.bias.size(); ++r) w.f64(d.bias(r));
    }
  }
  const auto h = detail::fnv1a(w.bytes().data(), w.bytes().size());
  w.u64(h);
  return std::move(w.bytes());
}

inline Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t header = kCheckpointMagic.size() + 4;
  if (bytes.size() < header + 8) throw CorruptFile("checkpoint too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw CorruptFile("not a checkpoint (bad magic)");
  }
  if (bytes[4] != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(bytes[4]) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - 8;
  detail::ByteReader tail(bytes.data() + body, 8);
  if (tail.u64() != detail::fnv1a(bytes.data(), body)) throw CorruptFile("checkpoint checksum mismatch");

  detail::ByteReader r(bytes.data() + header, body - header);
  Network net;
  for (auto* widths : {&net.spec.encoder, &net.spec.projector}) {
    const auto n = r.u64();
    if (n > r.remaining() / 8) throw CorruptFile("implausible layer count");
    widths->clear();
    for (std::uint64_t k = 0; k < n; ++k) widths->push_back(static_cast<std::size_t>(r.u64()));
  }
  try {
    net.spec.validate();
  } catch (const InvalidShape& e) {
    throw CorruptFile(std::string("bad layer manifest: ") + e.what());
  }
  auto read_layers = [&](const std::vector<std::size_t>& widths, std::vector<Dense>& layers) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(widths[l]);
      const auto out = static_cast<Eigen::Index>(widths[l + 1]);
      if (static_cast<std::size_t>(in * out + out) > r.remaining() / 8) throw CorruptFile("checkpoint ends early");
      Dense d;
      d.weight.resize(out, in);
      d.bias.resize(out);
      for (Eigen::Index i = 0; i < out; ++i) {
        for (Eigen::Index j = 0; j < in; ++j) d.weight(i, j) = r.f64();
      }
      for (Eigen::Index i = 0; i < out; ++i) d.bias(i) = r.f64();
      layers.push_back(std::move(d));
    }
  };
  read_layers(net.spec.encoder, net.encoder);
  read_layers(net.spec.projector, net.projector);
  if (r.remaining() != 0) throw CorruptFile("trailing bytes after parameters");
  return net;
}

// Writes to a temporary sibling and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const void* data, std::size_t n) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(net);
  write_file_atomic(path, bytes.data(), bytes.size());
}

inline Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace tcl
