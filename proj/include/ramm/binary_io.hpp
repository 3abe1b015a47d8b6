#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ramm {

// Little helpers for the versioned binary artifact files (vocab, codebook,
// index, checkpoints). All integers little-endian; doubles/floats raw.
// Writes go either to a file or to an in-memory buffer (used for tagged
// checkpoint sections).
class BinWriter {
 public:
  explicit BinWriter(const std::string& path);
  explicit BinWriter(std::string* buffer) : buffer_(buffer) {}
  ~BinWriter();

  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, size_t len);
  void str(const std::string& s);  // u64 length + bytes
  void vec(const Eigen::VectorXd& v);
  void mat(const Eigen::MatrixXd& m);  // rows, cols, doubles
  void close();

 private:
  std::ofstream f_;
  std::string path_;
  std::string* buffer_ = nullptr;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path);
  BinReader(const char* data, size_t len) : data_(data), len_(len) {}

  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  void bytes(void* data, size_t len);
  std::string str();
  Eigen::VectorXd vec();
  Eigen::MatrixXd mat();
  bool eof();

 private:
  std::ifstream f_;
  std::string path_;
  const char* data_ = nullptr;
  size_t len_ = 0;
  size_t pos_ = 0;
  bool from_file_ = false;
};

// Checks a 4-byte magic + u32 version; throws a descriptive error on
// mismatch.
void expect_magic(BinReader& r, const char magic[4], uint32_t version,
                  const std::string& what);
void write_magic(BinWriter& w, const char magic[4], uint32_t version);

}  // namespace ramm
