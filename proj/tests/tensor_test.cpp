#include <svprobe/random.hpp>
#include <svprobe/tensor.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

namespace fs = std::filesystem;
using namespace svprobe;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "svprobe_tensor_test";
  fs::create_directories(dir);
  return dir / name;
}

FeatureStack two_layer_stack() {
  FeatureStack s(2, 1, 1);
  s.at(0, 0, 0) = 1.0f;
  s.at(1, 0, 0) = 3.0f;
  return s;
}

}  // namespace

TEST(FeatureStack, RejectsEmptyShapesAndBadFrameRate) {
  EXPECT_THROW(FeatureStack(0, 1, 1), Error);
  EXPECT_THROW(FeatureStack(1, 0, 1), Error);
  EXPECT_THROW(FeatureStack(1, 1, 0), Error);
  EXPECT_THROW(FeatureStack(1, 1, 1, 0.0), Error);
  EXPECT_THROW(FeatureStack(1, 1, 1, -50.0), Error);
}

TEST(FeatureStack, LayerMajorIndexing) {
  FeatureStack s(2, 3, 4);
  s.at(1, 2, 3) = 7.0f;
  EXPECT_EQ(s.values()[(1 * 3 + 2) * 4 + 3], 7.0f);
  EXPECT_EQ(s.frame(1, 2)[3], 7.0f);
}

TEST(FeatureFile, SizeIsHeaderPlusPayload) {
  const auto bytes = encode_feature_file(two_layer_stack());
  EXPECT_EQ(bytes.size(), FeatureFileHeader::kSize + 2 * 1 * 1 * 4);
}

TEST(FeatureFile, BitExactHeaderLayout) {
  FeatureStack s(3, 5, 2, 50.0);
  s.at(0, 0, 0) = 1.0f;
  const auto b = encode_feature_file(s);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SVPF");
  EXPECT_EQ(b[4], 1);  // version
  EXPECT_EQ(b[5] | b[6] | b[7], 0);
  EXPECT_EQ(b[8], 3);  // layers u16
  EXPECT_EQ(b[9], 0);
  EXPECT_EQ(b[10], 2);  // dim u16
  EXPECT_EQ(b[11], 0);
  EXPECT_EQ(b[12], 5);  // frames u32
  EXPECT_EQ(b[13] | b[14] | b[15], 0);
  // 50.0f = 0x42480000 little-endian
  EXPECT_EQ(b[16], 0x00);
  EXPECT_EQ(b[17], 0x00);
  EXPECT_EQ(b[18], 0x48);
  EXPECT_EQ(b[19], 0x42);
  // 1.0f = 0x3F800000
  EXPECT_EQ(b[20], 0x00);
  EXPECT_EQ(b[23], 0x3F);
}

TEST(FeatureFile, RoundTripThroughDisk) {
  const auto path = temp_file("two_layer.svpf");
  write_feature_file(two_layer_stack(), path);
  EXPECT_EQ(fs::file_size(path), 28u);
  EXPECT_EQ(read_feature_file(path), two_layer_stack());
}

TEST(FeatureFile, RoundTripIsBitExactForRandomShapes) {
  Rng rng(42);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t layers = 1 + rng.below(16);
    const std::size_t frames = 1 + rng.below(200);
    const std::size_t dim = 1 + rng.below(64);
    FeatureStack s(layers, frames, dim);
    for (float& v : s.values()) v = static_cast<float>(rng.normal() * 100.0);
    const auto bytes = encode_feature_file(s);
    ASSERT_EQ(bytes.size(), FeatureFileHeader::kSize + layers * frames * dim * 4);
    const FeatureFileHeader h = decode_feature_header(bytes);
    ASSERT_EQ(h.payload_bytes() + FeatureFileHeader::kSize, bytes.size());
    ASSERT_EQ(decode_feature_file(bytes), s);
  }
}

TEST(FeatureFile, RejectsNonFiniteValues) {
  FeatureStack s(1, 2, 2);
  s.at(0, 1, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode_feature_file(s), Error);
  s.at(0, 1, 1) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(write_feature_file(s, temp_file("inf.svpf")), Error);
}

TEST(FeatureFile, RejectsBadMagic) {
  auto bytes = encode_feature_file(two_layer_stack());
  bytes[0] = 'X';
  try {
    decode_feature_file(bytes);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(FeatureFile, RejectsUnsupportedVersion) {
  auto bytes = encode_feature_file(two_layer_stack());
  bytes[4] = 2;
  try {
    decode_feature_file(bytes);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos);
  }
}

TEST(FeatureFile, RejectsTruncatedPayload) {
  auto bytes = encode_feature_file(two_layer_stack());
  bytes.pop_back();
  try {
    decode_feature_file(bytes);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  EXPECT_THROW(decode_feature_file(std::span(bytes).first(10)), Error);
}

TEST(FeatureFile, RejectsTrailingBytes) {
  auto bytes = encode_feature_file(two_layer_stack());
  bytes.push_back(0);
  EXPECT_THROW(decode_feature_file(bytes), Error);
}

TEST(FeatureFile, MissingFileIsAnError) {
  EXPECT_THROW(read_feature_file(temp_file("does_not_exist.svpf")), Error);
}

TEST(Kernels, SoftmaxSumsToOneAndIsShiftInvariant) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(13);
    for (double& v : logits) v = rng.uniform(-20.0, 20.0);
    const auto p = softmax(logits);
    double total = 0.0;
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    const double shift = rng.uniform(-100.0, 100.0);
    for (double& v : logits) v += shift;
    const auto q = softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Kernels, WeightedLayerSumAndMean) {
  const auto out = weighted_layer_sum(two_layer_stack(), std::vector<double>{0.25, 0.75});
  EXPECT_DOUBLE_EQ(out(0, 0), 2.5);
  EXPECT_THROW(weighted_layer_sum(two_layer_stack(), std::vector<double>{1.0}), Error);

  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 3.0;
  m(1, 1) = 4.0;
  const auto mean = mean_over_rows(m);
  EXPECT_DOUBLE_EQ(mean[0], 2.0);
  EXPECT_DOUBLE_EQ(mean[1], 2.0);
}

TEST(Kernels, AffineTransposed) {
  Matrix w(2, 3);
  w(0, 0) = 1.0;
  w(1, 2) = 2.0;
  const auto y = affine_transposed(w, std::vector<double>{3.0, 5.0}, std::vector<double>{0.5, 0.0, -1.0});
  EXPECT_DOUBLE_EQ(y[0], 3.5);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 9.0);
}
