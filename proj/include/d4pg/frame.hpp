#pragma once

// Binary parameter frame shared by the snapshot transport and checkpoints.
// All integers and reals are little-endian:
//
//   u32 magic 0xD4504706
//   u64 version
//   u32 layer_count
//   per layer: u32 rows, u32 cols, rows*cols f64 weights (row-major),
//              rows f64 bias
//   u64 checksum  FNV-1a 64 over every preceding byte of the frame

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "d4pg/nn.hpp"

namespace d4pg {

inline constexpr std::uint32_t kFrameMagic = 0xD4504706u;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                      std::uint64_t hash = 0xcbf29ce484222325ull);

// Little-endian append-only buffer.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void bytes(std::span<const std::uint8_t> b);
  void str(const std::string& s);  // u64 length + bytes
  void vec(const Eigen::VectorXd& v);  // u64 length + f64s
  void mat(const Eigen::MatrixXd& m);  // u32 rows, u32 cols, row-major f64s

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t> take() { return std::move(data_); }

 private:
  std::vector<std::uint8_t> data_;
};

// Bounds-checked reader; every failure throws LoadError naming `what`.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint32_t u32(const char* what);
  std::uint64_t u64(const char* what);
  std::int64_t i64(const char* what) { return static_cast<std::int64_t>(u64(what)); }
  double f64(const char* what);
  std::span<const std::uint8_t> bytes(std::size_t n, const char* what);
  std::string str(const char* what);
  Eigen::VectorXd vec(const char* what);
  Eigen::MatrixXd mat(const char* what);

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return data_.size() - offset_; }
  std::span<const std::uint8_t> consumed() const { return data_.first(offset_); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t offset_ = 0;
};

void write_frame(ByteWriter& out, const DenseNet& net, std::uint64_t version);
std::vector<std::uint8_t> encode_frame(const DenseNet& net, std::uint64_t version);

struct DecodedFrame {
  std::uint64_t version = 0;
  std::vector<DenseLayer> layers;
};

// Reads one frame at the reader's position. Throws LoadError on bad magic,
// truncation or checksum failure.
DecodedFrame read_frame(ByteReader& in, const std::string& label);
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

// Copies frame parameters into `net`, which fixes the expected shapes.
// Throws LoadError naming the first offending layer.
void load_frame_into(DenseNet& net, const DecodedFrame& frame, const std::string& label);

}  // namespace d4pg
