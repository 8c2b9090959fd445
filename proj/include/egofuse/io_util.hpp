#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian binary stream helpers used by every file codec. All formats
// carry a 4-byte magic and a u32 version so readers can fail loudly.

namespace egofuse::io {

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for write: " + path);
  }
  void magic(const char m[4]) { out_.write(m, 4); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void i32(int32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void f64s(const double* p, size_t n) { raw(p, 8 * n); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_);
  }

 private:
  void raw(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
  std::string path_;
  std::ofstream out_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open: " + path);
  }
  void expect_magic(const char m[4]) {
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw std::runtime_error(path_ + ": bad magic, expected " + std::string(m, 4));
  }
  uint8_t u8() { return get<uint8_t>(); }
  uint16_t u16() { return get<uint16_t>(); }
  uint32_t u32() { return get<uint32_t>(); }
  int32_t i32() { return get<int32_t>(); }
  uint64_t u64() { return get<uint64_t>(); }
  double f64() { return get<double>(); }
  void f64s(double* p, size_t n) { raw(p, 8 * n); }
  std::string str() {
    const uint32_t n = u32();
    if (n > (1u << 24)) throw std::runtime_error(path_ + ": unreasonable string size");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* p, size_t n) {
    in_.read(static_cast<char*>(p), n);
    if (static_cast<size_t>(in_.gcount()) != n)
      throw std::runtime_error(path_ + ": truncated file");
  }
  std::string path_;
  std::ifstream in_;
};

}  // namespace egofuse::io
