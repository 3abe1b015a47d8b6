#include "ramm/binary_io.hpp"

#include <cstring>
#include <stdexcept>

namespace ramm {

BinWriter::BinWriter(const std::string& path)
    : f_(path, std::ios::binary), path_(path) {
  if (!f_) throw std::runtime_error("cannot open for writing: " + path);
}

BinWriter::~BinWriter() = default;

void BinWriter::u32(uint32_t v) { bytes(&v, sizeof(v)); }
void BinWriter::u64(uint64_t v) { bytes(&v, sizeof(v)); }
void BinWriter::f32(float v) { bytes(&v, sizeof(v)); }
void BinWriter::f64(double v) { bytes(&v, sizeof(v)); }

void BinWriter::bytes(const void* data, size_t len) {
  if (buffer_) {
    buffer_->append(static_cast<const char*>(data), len);
    return;
  }
  f_.write(static_cast<const char*>(data),
           static_cast<std::streamsize>(len));
  if (!f_) throw std::runtime_error("write failed: " + path_);
}

void BinWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinWriter::vec(const Eigen::VectorXd& v) {
  u64(static_cast<uint64_t>(v.size()));
  bytes(v.data(), sizeof(double) * v.size());
}

void BinWriter::mat(const Eigen::MatrixXd& m) {
  u64(static_cast<uint64_t>(m.rows()));
  u64(static_cast<uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

void BinWriter::close() {
  if (buffer_) return;
  f_.close();
  if (!f_) throw std::runtime_error("close failed: " + path_);
}

BinReader::BinReader(const std::string& path)
    : f_(path, std::ios::binary), path_(path), from_file_(true) {
  if (!f_) throw std::runtime_error("cannot open for reading: " + path);
}

uint32_t BinReader::u32() {
  uint32_t v;
  bytes(&v, sizeof(v));
  return v;
}
uint64_t BinReader::u64() {
  uint64_t v;
  bytes(&v, sizeof(v));
  return v;
}
float BinReader::f32() {
  float v;
  bytes(&v, sizeof(v));
  return v;
}
double BinReader::f64() {
  double v;
  bytes(&v, sizeof(v));
  return v;
}

void BinReader::bytes(void* data, size_t len) {
  if (from_file_) {
    f_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (f_.gcount() != static_cast<std::streamsize>(len))
      throw std::runtime_error("truncated file: " + path_);
    return;
  }
  if (pos_ + len > len_)
    throw std::runtime_error("truncated buffer while reading binary data");
  std::memcpy(data, data_ + pos_, len);
  pos_ += len;
}

std::string BinReader::str() {
  uint64_t len = u64();
  if (len > (1ULL << 32))
    throw std::runtime_error("corrupt string length in " + path_);
  std::string s(len, '\0');
  bytes(s.data(), len);
  return s;
}

Eigen::VectorXd BinReader::vec() {
  uint64_t n = u64();
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  bytes(v.data(), sizeof(double) * n);
  return v;
}

Eigen::MatrixXd BinReader::mat() {
  uint64_t rows = u64(), cols = u64();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  return m;
}

bool BinReader::eof() {
  if (from_file_) return f_.peek() == EOF;
  return pos_ >= len_;
}

void expect_magic(BinReader& r, const char magic[4], uint32_t version,
                  const std::string& what) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error(what + ": bad magic (not a " + what + " file)");
  uint32_t v = r.u32();
  if (v != version)
    throw std::runtime_error(what + ": unsupported version " +
                             std::to_string(v));
}

void write_magic(BinWriter& w, const char magic[4], uint32_t version) {
  w.bytes(magic, 4);
  w.u32(version);
}

}  // namespace ramm
