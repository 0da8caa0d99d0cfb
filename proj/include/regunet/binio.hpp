#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "regunet/errors.hpp"

namespace rgn {

// Little-endian binary file helpers shared by the sample and checkpoint
// formats. Writers buffer in memory and commit via write-then-rename so a
// crash never leaves a truncated file behind.

class BinWriter {
public:
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    buf_.insert(buf_.end(), b, b + 4);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (bits >> (8 * i)) & 0xff;
    buf_.insert(buf_.end(), b, b + 8);
  }
  void bytes(const void* p, std::size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void f64_array(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  std::size_t size() const { return buf_.size(); }

  // Writes to path atomically (tmp file + rename).
  void commit(const std::string& path) const;

private:
  std::vector<unsigned char> buf_;
};

class BinReader {
public:
  explicit BinReader(const std::string& path);

  std::uint32_t u32(const char* what);
  double f64(const char* what);
  void bytes(void* out, std::size_t n, const char* what);
  void f64_array(double* out, std::size_t n, const char* what);
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end(const char* what) const;

private:
  void need(std::size_t n, const char* what);
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace rgn
