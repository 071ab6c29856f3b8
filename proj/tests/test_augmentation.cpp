#include <gtest/gtest.h>

#include <cmath>

#include "hybridct/augmentation.hpp"
#include "hybridct/error.hpp"

namespace hybridct {
namespace {

Tensor gradient_image(int size = 32) {
  Tensor t(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = static_cast<float>((x + 2 * y + c) % 17) / 16.0f;
  return t;
}

TEST(Augmentation, ZeroRangesSampleIdentity) {
  const AugmentationConfig c = AugmentationConfig::identity();
  Rng rng(1);
  const AugmentParams p = sample_params(c, rng);
  EXPECT_TRUE(p.is_geometric_identity());
  EXPECT_EQ(p.brightness, 1.0);
  EXPECT_EQ(p, AugmentParams{});
}

TEST(Augmentation, SamplingIsDeterministicAndInRange) {
  const AugmentationConfig c;
  Rng a(7), b(7);
  for (int i = 0; i < 200; ++i) {
    const AugmentParams p = sample_params(c, a);
    EXPECT_EQ(p, sample_params(c, b));
    EXPECT_LE(std::abs(p.rotation_deg), 10.0);
    EXPECT_LE(std::abs(p.dx), 0.05 * 224);
    EXPECT_LE(std::abs(p.dy), 0.05 * 224);
    EXPECT_LE(std::abs(p.shear_deg), 0.1);
    EXPECT_TRUE(p.zoom >= 0.9 && p.zoom <= 1.1);
    EXPECT_TRUE(p.brightness >= 0.9 && p.brightness <= 1.1);
  }
}

TEST(Augmentation, IdentityLeavesImageUnchanged) {
  const Tensor img = gradient_image();
  EXPECT_EQ(apply_augmentation(img, AugmentParams{}), img);
}

TEST(Augmentation, BrightnessScalesAndClips) {
  AugmentParams p;
  p.brightness = 1.1;
  for (float v : apply_augmentation(Tensor(8, 8, 3, 0.5f), p).data) ASSERT_NEAR(v, 0.55f, 1e-6f);
  for (float v : apply_augmentation(Tensor(8, 8, 3, 1.0f), p).data) ASSERT_EQ(v, 1.0f);
}

TEST(Augmentation, IntegerShiftMovesPixels) {
  const Tensor img = gradient_image();
  AugmentParams p;
  p.dx = 3.0;
  const Tensor out = apply_augmentation(img, p, FillMode::kConstant);
  // Output pixel x samples input x + dx, so content moves three pixels left.
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x + 3 < img.width; ++x) ASSERT_NEAR(out.at(y, x, 0), img.at(y, x + 3, 0), 1e-6f);
  for (int y = 0; y < img.height; ++y) EXPECT_EQ(out.at(y, img.width - 1, 0), 0.0f);
}

TEST(Augmentation, GeometryPreservesShapeAndRange) {
  const Tensor img = gradient_image();
  AugmentParams p;
  p.rotation_deg = 9.0;
  p.zoom = 1.08;
  p.shear_deg = 0.1;
  for (FillMode mode : {FillMode::kReflect, FillMode::kNearest, FillMode::kConstant}) {
    const Tensor out = apply_augmentation(img, p, mode);
    ASSERT_TRUE(out.same_shape(img));
    for (float v : out.data) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Augmentation, ConfigValidationAndParsing) {
  AugmentationConfig c;
  c.brightness_lo = 1.2;
  EXPECT_THROW(c.validate(), Error);
  c = AugmentationConfig{};
  c.zoom_range = -0.1;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_fill_mode("nearest"), FillMode::kNearest);
  EXPECT_THROW(parse_fill_mode("wrap"), Error);
}

}  // namespace
}  // namespace hybridct
