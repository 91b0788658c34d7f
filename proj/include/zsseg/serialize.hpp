#pragma once

// Little-endian binary containers with a trailing integrity hash, plus
// atomic file writes (temp file + rename in the target directory).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "zsseg/core.hpp"
#include "zsseg/tensor.hpp"

namespace zsseg {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    raw(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xff);
    raw(b, 8);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    if (n > (1u << 20)) throw io_error(what_ + ": implausible string length");
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw io_error(what_ + ": truncated data");
  }
  std::string_view buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw io_error("read failed: " + path);
  return ss.str();
}

// Writes via a temp file in the same directory, then renames, so readers
// never observe a partially written file.
inline void write_file_atomic(const std::string& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw io_error("cannot create directory " + p.parent_path().string() +
                           ": " + ec.message());
  }
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for write: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw io_error("rename failed for " + path + ": " + ec.message());
}

// Container framing: 4-byte magic, u32 version, payload, trailing FNV-1a
// hash of everything before the hash.
inline std::string seal_container(std::string_view magic, std::uint32_t version,
                                  std::string_view payload) {
  ByteWriter w;
  w.raw(magic.data(), 4);
  w.u32(version);
  w.raw(payload.data(), payload.size());
  const std::uint64_t h = fnv1a64(w.bytes());
  w.u64(h);
  return w.take();
}

inline std::string open_container(std::string_view magic, std::uint32_t version,
                                  const std::string& bytes, const std::string& what) {
  if (bytes.size() < 16) throw io_error(what + ": file too short to be valid");
  const std::string_view body(bytes.data(), bytes.size() - 8);
  ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8), what);
  if (fnv1a64(body) != tail.u64())
    throw io_error(what + ": integrity hash mismatch (corrupt or truncated file)");
  if (std::string_view(bytes).substr(0, 4) != magic)
    throw io_error(what + ": bad magic, not a " + what + " file");
  ByteReader head(std::string_view(bytes).substr(4, 4), what);
  const std::uint32_t v = head.u32();
  if (v != version)
    throw io_error(what + ": unsupported format version " + std::to_string(v));
  return bytes.substr(8, bytes.size() - 16);
}

inline void write_tensor_map(ByteWriter& w, const std::map<std::string, Tensor<double>>& m) {
  w.u64(m.size());
  for (const auto& [name, t] : m) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.ndim()));
    for (std::int64_t d = 0; d < t.ndim(); ++d) w.i64(t.dim(d));
    for (std::int64_t i = 0; i < t.numel(); ++i) w.f64(t[i]);
  }
}

inline std::map<std::string, Tensor<double>> read_tensor_map(ByteReader& r,
                                                             const std::string& what) {
  std::map<std::string, Tensor<double>> out;
  const std::uint64_t count = r.u64();
  if (count > (1u << 20)) throw io_error(what + ": implausible tensor count");
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.str();
    const std::uint32_t nd = r.u32();
    if (nd > 8) throw io_error(what + ": implausible rank for " + name);
    std::vector<std::int64_t> dims(nd);
    std::int64_t numel = 1;
    for (auto& d : dims) {
      d = r.i64();
      if (d <= 0 || d > (std::int64_t(1) << 32))
        throw io_error(what + ": implausible dimension for " + name);
      numel *= d;
    }
    if (numel > (std::int64_t(1) << 31)) throw io_error(what + ": tensor too large: " + name);
    Tensor<double> t(dims);
    for (std::int64_t i = 0; i < numel; ++i) t[i] = r.f64();
    if (out.count(name)) throw io_error(what + ": duplicate tensor name " + name);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

inline constexpr std::string_view kWeightBundleMagic = "ZSWT";
inline constexpr std::uint32_t kWeightBundleVersion = 1;

inline void save_tensor_bundle(const std::string& path,
                               const std::map<std::string, Tensor<double>>& m) {
  ByteWriter w;
  write_tensor_map(w, m);
  write_file_atomic(path, seal_container(kWeightBundleMagic, kWeightBundleVersion, w.bytes()));
}

inline std::map<std::string, Tensor<double>> load_tensor_bundle(const std::string& path) {
  const std::string payload =
      open_container(kWeightBundleMagic, kWeightBundleVersion, read_file_bytes(path),
                     "weight bundle");
  ByteReader r(payload, "weight bundle");
  auto m = read_tensor_map(r, "weight bundle");
  if (!r.done()) throw io_error("weight bundle: trailing bytes after tensor map");
  return m;
}

}  // namespace zsseg
