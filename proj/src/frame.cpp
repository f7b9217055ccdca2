#include "d4pg/frame.hpp"

#include <bit>
#include <cstring>

#include "d4pg/errors.hpp"

namespace d4pg {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) data_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) data_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> b) {
  data_.insert(data_.end(), b.begin(), b.end());
}

void ByteWriter::str(const std::string& s) {
  u64(s.size());
  data_.insert(data_.end(), s.begin(), s.end());
}

void ByteWriter::vec(const Eigen::VectorXd& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
}

void ByteWriter::mat(const Eigen::MatrixXd& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
  }
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n, const char* what) {
  if (remaining() < n) {
    throw LoadError(std::string("truncated data while reading ") + what);
  }
  auto out = data_.subspan(offset_, n);
  offset_ += n;
  return out;
}

std::uint32_t ByteReader::u32(const char* what) {
  auto b = bytes(4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64(const char* what) {
  auto b = bytes(8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double ByteReader::f64(const char* what) { return std::bit_cast<double>(u64(what)); }

std::string ByteReader::str(const char* what) {
  const std::uint64_t n = u64(what);
  auto b = bytes(n, what);
  return std::string(b.begin(), b.end());
}

Eigen::VectorXd ByteReader::vec(const char* what) {
  const std::uint64_t n = u64(what);
  if (n > remaining() / 8) throw LoadError(std::string("implausible length for ") + what);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64(what);
  return v;
}

Eigen::MatrixXd ByteReader::mat(const char* what) {
  const std::uint32_t rows = u32(what);
  const std::uint32_t cols = u32(what);
  if (static_cast<std::uint64_t>(rows) * cols > remaining() / 8) {
    throw LoadError(std::string("implausible shape for ") + what);
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64(what);
  }
  return m;
}

void write_frame(ByteWriter& out, const DenseNet& net, std::uint64_t version) {
  ByteWriter frame;
  frame.u32(kFrameMagic);
  frame.u64(version);
  frame.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    frame.mat(layer.weights);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) frame.f64(layer.bias[r]);
  }
  const std::uint64_t checksum = fnv1a64(frame.data());
  frame.u64(checksum);
  out.bytes(frame.data());
}

std::vector<std::uint8_t> encode_frame(const DenseNet& net, std::uint64_t version) {
  ByteWriter w;
  write_frame(w, net, version);
  return w.take();
}

DecodedFrame read_frame(ByteReader& in, const std::string& label) {
  const std::size_t start = in.offset();
  const std::string what = label + " frame";
  const char* w = what.c_str();
  if (in.u32(w) != kFrameMagic) throw LoadError(label + " frame: bad magic");
  DecodedFrame frame;
  frame.version = in.u64(w);
  const std::uint32_t layer_count = in.u32(w);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    DenseLayer layer;
    layer.weights = in.mat(w);
    layer.bias.resize(layer.weights.rows());
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = in.f64(w);
    frame.layers.push_back(std::move(layer));
  }
  const auto payload = in.consumed().subspan(start);
  const std::uint64_t expected = fnv1a64(payload);
  if (in.u64(w) != expected) throw LoadError(label + " frame: checksum mismatch");
  return frame;
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  return read_frame(in, "snapshot");
}

void load_frame_into(DenseNet& net, const DecodedFrame& frame, const std::string& label) {
  if (frame.layers.size() != net.layers.size()) {
    throw LoadError(label + ": frame has " + std::to_string(frame.layers.size()) +
                    " layers, network has " + std::to_string(net.layers.size()));
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& src = frame.layers[l];
    const auto& dst = net.layers[l];
    if (src.weights.rows() != dst.weights.rows() || src.weights.cols() != dst.weights.cols()) {
      throw LoadError(label + ": layer " + std::to_string(l) + " is " +
                      std::to_string(src.weights.rows()) + "x" +
                      std::to_string(src.weights.cols()) + ", expected " +
                      std::to_string(dst.weights.rows()) + "x" +
                      std::to_string(dst.weights.cols()));
    }
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) net.layers[l] = frame.layers[l];
}

}  // namespace d4pg
