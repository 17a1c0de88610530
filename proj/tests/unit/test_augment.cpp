#include <gtest/gtest.h>

#include <set>

#include "bmssl/augment.hpp"
#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"
#include "bmssl/synth_data.hpp"

using namespace bmssl;

namespace {

Image sample_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img(kImageSide, kImageSide);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

AugmentationSpec spec_of(AugmentKind kind, Intensity intensity = Intensity::Strong) {
  AugmentationSpec s;
  s.kind = kind;
  s.intensity = intensity;
  s.crop_fraction = 0.6;
  s.quarter_turns = 1;
  s.noise_sigma = 0.2;
  s.brightness = 1.3;
  s.cutout_area = 0.3;
  return s;
}

}  // namespace

TEST(Augment, FlipTwiceIsIdentity) {
  const Image img = sample_image(1);
  const auto s = spec_of(AugmentKind::HorizontalFlip);
  EXPECT_TRUE(bitwise_equal(apply_augmentation(apply_augmentation(img, s, 3), s, 4), img));
}

TEST(Augment, FourQuarterTurnsIsIdentity) {
  const Image img = sample_image(2);
  const auto s = spec_of(AugmentKind::Rotate90);
  Image out = img;
  for (int i = 0; i < 4; ++i) out = apply_augmentation(out, s, static_cast<std::uint64_t>(i));
  EXPECT_TRUE(bitwise_equal(out, img));
  EXPECT_FALSE(bitwise_equal(apply_augmentation(img, s, 0), img));
}

TEST(Augment, ZeroNoiseIsIdentity) {
  const Image img = sample_image(3);
  auto s = spec_of(AugmentKind::GaussianNoise);
  s.noise_sigma = 0.0;
  EXPECT_TRUE(bitwise_equal(apply_augmentation(img, s, 99), img));
}

TEST(Augment, EveryKindIsDeterministicShapeAndRangePreserving) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Image img = sample_image(seed);
    for (auto kind : kAllAugmentKinds) {
      for (auto intensity : {Intensity::Mild, Intensity::Strong}) {
        auto s = spec_of(kind, intensity);
        if (intensity == Intensity::Mild) s.crop_fraction = 0.9;
        const Image a = apply_augmentation(img, s, seed);
        const Image b = apply_augmentation(img, s, seed);
        EXPECT_TRUE(bitwise_equal(a, b)) << augment_kind_name(kind);
        EXPECT_EQ(a.width, img.width);
        EXPECT_EQ(a.height, img.height);
        EXPECT_EQ(a.channels, img.channels);
        for (float p : a.pixels) {
          EXPECT_GE(p, 0.0f);
          EXPECT_LE(p, 1.0f);
        }
      }
    }
  }
}

TEST(Augment, OutOfRangeParametersRejected) {
  const Image img = sample_image(4);
  auto crop = spec_of(AugmentKind::CropResize);
  crop.crop_fraction = 0.3;
  EXPECT_THROW(apply_augmentation(img, crop, 0), ValidationError);
  auto mild = spec_of(AugmentKind::CropResize, Intensity::Mild);
  mild.crop_fraction = 0.6;
  EXPECT_THROW(apply_augmentation(img, mild, 0), ValidationError);
  auto rot = spec_of(AugmentKind::Rotate90);
  rot.quarter_turns = 4;
  EXPECT_THROW(apply_augmentation(img, rot, 0), ValidationError);
  auto noise = spec_of(AugmentKind::GaussianNoise);
  noise.noise_sigma = 0.3;
  EXPECT_THROW(apply_augmentation(img, noise, 0), ValidationError);
  auto bright = spec_of(AugmentKind::BrightnessScale);
  bright.brightness = 1.5;
  EXPECT_THROW(apply_augmentation(img, bright, 0), ValidationError);
  auto cut = spec_of(AugmentKind::Cutout);
  cut.cutout_area = 0.5;
  EXPECT_THROW(apply_augmentation(img, cut, 0), ValidationError);
}

TEST(Augment, RotateOddTurnsNeedsSquareImage) {
  Image wide(8, 4);
  EXPECT_THROW(apply_augmentation(wide, spec_of(AugmentKind::Rotate90), 0), ValidationError);
}

TEST(Pipeline, A1UsesOnlyCropResizeMild) {
  const auto level = AugmentationLevel::standard(AugmentLevelId::A1);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (const auto& s : sample_pipeline(level, seed)) {
      EXPECT_EQ(s.kind, AugmentKind::CropResize);
      EXPECT_EQ(s.intensity, Intensity::Mild);
      EXPECT_NO_THROW(s.validate());
    }
  }
}

TEST(Pipeline, A4CoversFiveKindsAllStrong) {
  const auto level = AugmentationLevel::standard(AugmentLevelId::A4);
  std::set<AugmentKind> seen;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    for (const auto& s : sample_pipeline(level, seed)) {
      seen.insert(s.kind);
      EXPECT_EQ(s.intensity, Intensity::Strong);
      EXPECT_NO_THROW(s.validate());
    }
  }
  EXPECT_EQ(seen.size(), 5u);
  EXPECT_FALSE(seen.contains(AugmentKind::Rotate90));
}

TEST(Pipeline, FixedSeedRepeats) {
  for (auto id : {AugmentLevelId::A1, AugmentLevelId::A2, AugmentLevelId::A3, AugmentLevelId::A4}) {
    const auto level = AugmentationLevel::standard(id);
    const auto a = sample_pipeline(level, 77);
    const auto b = sample_pipeline(level, 77);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].kind, b[i].kind);
      EXPECT_EQ(a[i].crop_fraction, b[i].crop_fraction);
      EXPECT_EQ(a[i].noise_sigma, b[i].noise_sigma);
      EXPECT_EQ(a[i].brightness, b[i].brightness);
      EXPECT_EQ(a[i].cutout_area, b[i].cutout_area);
    }
    const Image img = sample_image(5);
    EXPECT_TRUE(bitwise_equal(augment_view(img, level, 8), augment_view(img, level, 8)));
  }
}

TEST(Pipeline, LevelNamesRoundTrip) {
  for (auto id : {AugmentLevelId::A1, AugmentLevelId::A2, AugmentLevelId::A3, AugmentLevelId::A4})
    EXPECT_EQ(AugmentationLevel::parse(level_name(id)).level, id);
  EXPECT_THROW(AugmentationLevel::parse("A5"), ValidationError);
}
