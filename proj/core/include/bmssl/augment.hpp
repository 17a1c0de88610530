#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bmssl/image.hpp"

namespace bmssl {

enum class AugmentKind : std::uint8_t {
  CropResize,
  HorizontalFlip,
  Rotate90,
  GaussianNoise,
  BrightnessScale,
  Cutout,
};

inline constexpr std::array<AugmentKind, 6> kAllAugmentKinds = {
    AugmentKind::CropResize,    AugmentKind::HorizontalFlip,  AugmentKind::Rotate90,
    AugmentKind::GaussianNoise, AugmentKind::BrightnessScale, AugmentKind::Cutout,
};

enum class Intensity : std::uint8_t { Mild, Strong };

std::string_view augment_kind_name(AugmentKind kind);
std::string_view intensity_name(Intensity intensity);

// Only the field matching `kind` is read.
struct AugmentationSpec {
  AugmentKind kind = AugmentKind::HorizontalFlip;
  Intensity intensity = Intensity::Mild;
  double crop_fraction = 1.0;    // CropResize: side fraction kept, [0.5, 1], mild >= 0.8
  int quarter_turns = 1;         // Rotate90: counter-clockwise quarter turns, [0, 3]
  double noise_sigma = 0.0;      // GaussianNoise: [0, 0.25]
  double brightness = 1.0;       // BrightnessScale: [0.6, 1.4]
  double cutout_area = 0.0;      // Cutout: fraction of image area, [0, 0.4]

  // Throws ValidationError when a parameter is out of range.
  void validate() const;
};

enum class AugmentLevelId : std::uint8_t { A1, A2, A3, A4 };

struct AugmentationLevel {
  AugmentLevelId level = AugmentLevelId::A4;
  std::vector<AugmentKind> kinds;
  Intensity intensity = Intensity::Strong;

  // A1: crop-resize mild, A2: crop-resize strong, A3: five kinds mild,
  // A4: five kinds strong. The five kinds exclude rotate90.
  static AugmentationLevel standard(AugmentLevelId id);
  static AugmentationLevel parse(std::string_view name);
};

std::string_view level_name(AugmentLevelId id);

// Pure function of (image, spec, seed). Output keeps the input dimensions.
Image apply_augmentation(const Image& image, const AugmentationSpec& spec, std::uint64_t seed);

// One to three specs drawn from the level's kinds at its intensity.
std::vector<AugmentationSpec> sample_pipeline(const AugmentationLevel& level, std::uint64_t seed);

// Draws a pipeline from `seed` and applies it.
Image augment_view(const Image& image, const AugmentationLevel& level, std::uint64_t seed);

}  // namespace bmssl
