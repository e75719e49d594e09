#pragma once

// Flat binary archive mapping path strings to typed arrays. Used for model
// checkpoints and full trainer snapshots. Values are stored little-endian
// (raw x86 layout); round-trips are bit-exact.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbgfqn {

struct ArchiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Archive {
 public:
  enum class Dtype : uint8_t { F32 = 0, F64 = 1, I64 = 2, U8 = 3 };

  static constexpr uint32_t kMagic = 0x4e514244;  // "DBQN"
  static constexpr uint32_t kVersion = 1;

  struct Entry {
    Dtype dtype = Dtype::U8;
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;
  };

  bool contains(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void put_f32(const std::string& key, const std::vector<int64_t>& shape, const float* data, size_t n) {
    put_raw(key, Dtype::F32, shape, data, n * sizeof(float));
  }
  void put_f64(const std::string& key, const std::vector<int64_t>& shape, const double* data, size_t n) {
    put_raw(key, Dtype::F64, shape, data, n * sizeof(double));
  }
  void put_i64(const std::string& key, const std::vector<int64_t>& v) {
    put_raw(key, Dtype::I64, {static_cast<int64_t>(v.size())}, v.data(), v.size() * sizeof(int64_t));
  }
  void put_scalar_i64(const std::string& key, int64_t v) { put_i64(key, std::vector<int64_t>{v}); }
  void put_bytes(const std::string& key, const std::string& s) {
    put_raw(key, Dtype::U8, {static_cast<int64_t>(s.size())}, s.data(), s.size());
  }

  const Entry& at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ArchiveError("archive entry missing: " + key);
    return it->second;
  }

  std::vector<float> get_f32(const std::string& key) const {
    const Entry& e = at(key);
    if (e.dtype != Dtype::F32) throw ArchiveError("dtype mismatch for " + key);
    std::vector<float> out(e.bytes.size() / sizeof(float));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
  }
  std::vector<double> get_f64(const std::string& key) const {
    const Entry& e = at(key);
    if (e.dtype != Dtype::F64) throw ArchiveError("dtype mismatch for " + key);
    std::vector<double> out(e.bytes.size() / sizeof(double));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
  }
  std::vector<int64_t> get_i64(const std::string& key) const {
    const Entry& e = at(key);
    if (e.dtype != Dtype::I64) throw ArchiveError("dtype mismatch for " + key);
    std::vector<int64_t> out(e.bytes.size() / sizeof(int64_t));
    std::memcpy(out.data(), e.bytes.data(), e.bytes.size());
    return out;
  }
  int64_t get_scalar_i64(const std::string& key) const {
    auto v = get_i64(key);
    if (v.size() != 1) throw ArchiveError("expected scalar entry: " + key);
    return v[0];
  }
  std::string get_bytes(const std::string& key) const {
    const Entry& e = at(key);
    if (e.dtype != Dtype::U8) throw ArchiveError("dtype mismatch for " + key);
    return std::string(e.bytes.begin(), e.bytes.end());
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArchiveError("cannot open for write: " + path);
    write_u32(f, kMagic);
    write_u32(f, kVersion);
    write_u64(f, entries_.size());
    for (const auto& [key, e] : entries_) {
      write_u32(f, static_cast<uint32_t>(key.size()));
      f.write(key.data(), static_cast<std::streamsize>(key.size()));
      f.put(static_cast<char>(e.dtype));
      write_u32(f, static_cast<uint32_t>(e.shape.size()));
      for (int64_t d : e.shape) write_u64(f, static_cast<uint64_t>(d));
      write_u64(f, e.bytes.size());
      f.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!f) throw ArchiveError("write failed: " + path);
  }

  static Archive load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArchiveError("cannot open for read: " + path);
    if (read_u32(f) != kMagic) throw ArchiveError("bad magic in " + path);
    const uint32_t version = read_u32(f);
    if (version != kVersion)
      throw ArchiveError("unsupported archive version " + std::to_string(version) + " in " + path);
    const uint64_t count = read_u64(f);
    Archive a;
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t klen = read_u32(f);
      std::string key(klen, '\0');
      f.read(key.data(), klen);
      Entry e;
      e.dtype = static_cast<Dtype>(f.get());
      const uint32_t rank = read_u32(f);
      e.shape.resize(rank);
      for (uint32_t r = 0; r < rank; ++r) e.shape[r] = static_cast<int64_t>(read_u64(f));
      const uint64_t nbytes = read_u64(f);
      e.bytes.resize(nbytes);
      f.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(nbytes));
      if (!f) throw ArchiveError("truncated archive: " + path);
      a.entries_[key] = std::move(e);
    }
    return a;
  }

 private:
  void put_raw(const std::string& key, Dtype dt, const std::vector<int64_t>& shape, const void* data,
               size_t nbytes) {
    Entry e;
    e.dtype = dt;
    e.shape = shape;
    e.bytes.resize(nbytes);
    std::memcpy(e.bytes.data(), data, nbytes);
    entries_[key] = std::move(e);
  }
  static void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
  static void write_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
  static uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  static uint64_t read_u64(std::ifstream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }

  std::map<std::string, Entry> entries_;
};

}  // namespace dbgfqn
