#include "regunet/binio.hpp"

#include <cstdio>
#include <fstream>

namespace rgn {

void BinWriter::commit(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " -> " + path);
}

BinReader::BinReader(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for reading: " + path);
  const std::streamsize n = in.tellg();
  in.seekg(0);
  buf_.resize(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(buf_.data()), n);
  if (!in) throw IoError("short read: " + path);
}

void BinReader::need(std::size_t n, const char* what) {
  if (pos_ + n > buf_.size())
    throw FormatError(std::string("truncated file while reading ") + what,
                      pos_);
}

std::uint32_t BinReader::u32(const char* what) {
  need(4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

double BinReader::f64(const char* what) {
  need(8, what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 8;
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void BinReader::bytes(void* out, std::size_t n, const char* what) {
  need(n, what);
  std::memcpy(out, buf_.data() + pos_, n);
  pos_ += n;
}

void BinReader::f64_array(double* out, std::size_t n, const char* what) {
  for (std::size_t i = 0; i < n; ++i) out[i] = f64(what);
}

void BinReader::expect_end(const char* what) const {
  if (pos_ != buf_.size())
    throw FormatError(std::string("trailing bytes after ") + what, pos_);
}

}  // namespace rgn
