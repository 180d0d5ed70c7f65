#pragma once

#include <svprobe/error.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace svprobe {

// ---------------------------------------------------------------------------
// Matrix: dense row-major 64-bit matrix. All arithmetic in the toolkit runs
// in double regardless of how features are stored on disk.
// ---------------------------------------------------------------------------
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// FeatureStack: per-layer frame features from a frozen frontend, indexed
// [layer][frame][dim]. Values are stored in 32-bit so that the file format
// round-trips bit-exactly; readers widen to double.
// ---------------------------------------------------------------------------
class FeatureStack {
 public:
  static constexpr std::size_t kDefaultLayers = 13;
  static constexpr std::size_t kDefaultDim = 768;
  static constexpr double kDefaultFrameRate = 50.0;

  FeatureStack() = default;

  FeatureStack(std::size_t layers, std::size_t frames, std::size_t dim,
               double frame_rate = kDefaultFrameRate)
      : layers_(layers), frames_(frames), dim_(dim), frame_rate_(frame_rate),
        data_(layers * frames * dim, 0.0f) {
    if (layers == 0 || frames == 0 || dim == 0) {
      throw Error("feature stack: layers, frames and dim must be >= 1");
    }
    if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) {
      throw Error("feature stack: frame_rate must be positive");
    }
  }

  std::size_t layers() const noexcept { return layers_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t dim() const noexcept { return dim_; }
  double frame_rate() const noexcept { return frame_rate_; }

  float& at(std::size_t layer, std::size_t frame, std::size_t d) noexcept {
    return data_[(layer * frames_ + frame) * dim_ + d];
  }
  float at(std::size_t layer, std::size_t frame, std::size_t d) const noexcept {
    return data_[(layer * frames_ + frame) * dim_ + d];
  }

  // One frame of one layer, length dim().
  std::span<const float> frame(std::size_t layer, std::size_t t) const noexcept {
    return {data_.data() + (layer * frames_ + t) * dim_, dim_};
  }
  std::span<float> frame(std::size_t layer, std::size_t t) noexcept {
    return {data_.data() + (layer * frames_ + t) * dim_, dim_};
  }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }

  bool all_finite() const noexcept {
    for (float v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Bitwise equality, so NaN payloads and signed zeros compare exactly.
  bool operator==(const FeatureStack& o) const noexcept {
    return layers_ == o.layers_ && frames_ == o.frames_ && dim_ == o.dim_ &&
           std::bit_cast<std::uint64_t>(frame_rate_) == std::bit_cast<std::uint64_t>(o.frame_rate_) &&
           std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t layers_ = 0;
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
  double frame_rate_ = kDefaultFrameRate;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Little-endian byte helpers shared by the binary formats.
// ---------------------------------------------------------------------------
namespace le {

template <typename U>
inline void put_uint(std::vector<unsigned char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu));
  }
}

template <typename U>
inline U get_uint(std::span<const unsigned char> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  }
  return static_cast<U>(v);
}

inline void put_f32(std::vector<unsigned char>& out, float v) {
  put_uint(out, std::bit_cast<std::uint32_t>(v));
}
inline float get_f32(std::span<const unsigned char> in, std::size_t offset) {
  return std::bit_cast<float>(get_uint<std::uint32_t>(in, offset));
}
inline void put_f64(std::vector<unsigned char>& out, double v) {
  put_uint(out, std::bit_cast<std::uint64_t>(v));
}
inline double get_f64(std::span<const unsigned char> in, std::size_t offset) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(in, offset));
}

}  // namespace le

inline std::vector<unsigned char> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_binary_file(const std::filesystem::path& path,
                              std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Feature file (.svpf)
//
//   0..3   magic "SVPF"
//   4..7   version (u32 LE) = 1
//   8..9   layers (u16 LE)
//   10..11 dim (u16 LE)
//   12..15 frames (u32 LE)
//   16..19 frame_rate (f32 LE)
//   20..   payload, f32 LE, order [layer][frame][dim]
// ---------------------------------------------------------------------------
struct FeatureFileHeader {
  static constexpr std::array<char, 4> kMagic{'S', 'V', 'P', 'F'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kSize = 20;

  std::uint32_t version = kVersion;
  std::uint16_t layers = 0;
  std::uint16_t dim = 0;
  std::uint32_t frames = 0;
  float frame_rate = 0.0f;

  std::uint64_t payload_bytes() const noexcept {
    return std::uint64_t{layers} * frames * dim * sizeof(float);
  }
};

inline std::vector<unsigned char> encode_feature_file(const FeatureStack& stack) {
  if (!stack.all_finite()) throw Error("feature stack contains non-finite values");
  if (stack.layers() > 0xFFFFu || stack.dim() > 0xFFFFu || stack.frames() > 0xFFFFFFFFu) {
    throw Error("feature stack shape exceeds the file format limits");
  }
  const auto rate = static_cast<float>(stack.frame_rate());
  if (static_cast<double>(rate) != stack.frame_rate()) {
    throw Error("frame_rate is not representable as a 32-bit real");
  }

  std::vector<unsigned char> out;
  out.reserve(FeatureFileHeader::kSize + stack.values().size() * sizeof(float));
  for (char c : FeatureFileHeader::kMagic) out.push_back(static_cast<unsigned char>(c));
  le::put_uint<std::uint32_t>(out, FeatureFileHeader::kVersion);
  le::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(stack.layers()));
  le::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(stack.dim()));
  le::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(stack.frames()));
  le::put_f32(out, rate);
  for (float v : stack.values()) le::put_f32(out, v);
  return out;
}

inline FeatureFileHeader decode_feature_header(std::span<const unsigned char> bytes) {
  if (bytes.size() < FeatureFileHeader::kSize) {
    throw Error("truncated feature file: header needs 20 bytes, got " + std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), FeatureFileHeader::kMagic.data(), 4) != 0) {
    throw Error("bad magic: not a feature file");
  }
  FeatureFileHeader h;
  h.version = le::get_uint<std::uint32_t>(bytes, 4);
  if (h.version != FeatureFileHeader::kVersion) {
    throw Error("unsupported version " + std::to_string(h.version));
  }
  h.layers = le::get_uint<std::uint16_t>(bytes, 8);
  h.dim = le::get_uint<std::uint16_t>(bytes, 10);
  h.frames = le::get_uint<std::uint32_t>(bytes, 12);
  h.frame_rate = le::get_f32(bytes, 16);
  return h;
}

inline FeatureStack decode_feature_file(std::span<const unsigned char> bytes) {
  const FeatureFileHeader h = decode_feature_header(bytes);
  const std::uint64_t actual = bytes.size() - FeatureFileHeader::kSize;
  if (actual < h.payload_bytes()) {
    throw Error("truncated payload: expected " + std::to_string(h.payload_bytes()) +
                " bytes, got " + std::to_string(actual));
  }
  if (actual > h.payload_bytes()) {
    throw Error("payload size mismatch: expected " + std::to_string(h.payload_bytes()) +
                " bytes, got " + std::to_string(actual));
  }
  FeatureStack stack(h.layers, h.frames, h.dim, h.frame_rate);
  auto values = stack.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = le::get_f32(bytes, FeatureFileHeader::kSize + i * sizeof(float));
  }
  if (!stack.all_finite()) throw Error("feature file contains non-finite values");
  return stack;
}

inline void write_feature_file(const FeatureStack& stack, const std::filesystem::path& path) {
  write_binary_file(path, encode_feature_file(stack));
}

inline FeatureStack read_feature_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  try {
    return decode_feature_file(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline double log_sum_exp(std::span<const double> logits) {
  double peak = logits[0];
  for (double v : logits) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  return peak + std::log(total);
}

// out[t][d] = sum_l weights[l] * stack[l][t][d]
inline Matrix weighted_layer_sum(const FeatureStack& stack, std::span<const double> weights) {
  if (weights.size() != stack.layers()) {
    throw Error("layer weight count " + std::to_string(weights.size()) +
                " does not match feature layers " + std::to_string(stack.layers()));
  }
  Matrix out(stack.frames(), stack.dim());
  for (std::size_t l = 0; l < stack.layers(); ++l) {
    const double w = weights[l];
    for (std::size_t t = 0; t < stack.frames(); ++t) {
      auto src = stack.frame(l, t);
      auto dst = out.row(t);
      for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += w * static_cast<double>(src[d]);
    }
  }
  return out;
}

inline std::vector<double> mean_over_rows(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(m.rows());
  return out;
}

// y = W^T x + b for W of shape (x.size() x b.size()).
inline std::vector<double> affine_transposed(const Matrix& weight, std::span<const double> x,
                                             std::span<const double> bias) {
  std::vector<double> y(bias.begin(), bias.end());
  for (std::size_t d = 0; d < weight.rows(); ++d) {
    const double xd = x[d];
    auto w = weight.row(d);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += xd * w[k];
  }
  return y;
}

}  // namespace svprobe
