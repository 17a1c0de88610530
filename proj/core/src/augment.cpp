#include "bmssl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

void Image::clamp() {
  for (auto& p : pixels) p = std::clamp(p, 0.0f, 1.0f);
}

bool bitwise_equal(const Image& a, const Image& b) {
  return a.width == b.width && a.height == b.height && a.channels == b.channels &&
         a.pixels.size() == b.pixels.size() &&
         std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0;
}

std::string_view augment_kind_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::CropResize: return "crop-resize";
    case AugmentKind::HorizontalFlip: return "horizontal-flip";
    case AugmentKind::Rotate90: return "rotate90";
    case AugmentKind::GaussianNoise: return "gaussian-noise";
    case AugmentKind::BrightnessScale: return "brightness-scale";
    case AugmentKind::Cutout: return "cutout";
  }
  return "unknown";
}

std::string_view intensity_name(Intensity intensity) { return intensity == Intensity::Mild ? "mild" : "strong"; }

std::string_view level_name(AugmentLevelId id) {
  switch (id) {
    case AugmentLevelId::A1: return "A1";
    case AugmentLevelId::A2: return "A2";
    case AugmentLevelId::A3: return "A3";
    case AugmentLevelId::A4: return "A4";
  }
  return "?";
}

void AugmentationSpec::validate() const {
  auto fail = [this](const std::string& what) {
    throw ValidationError(std::string(augment_kind_name(kind)) + ": " + what);
  };
  switch (kind) {
    case AugmentKind::CropResize: {
      const double lo = intensity == Intensity::Mild ? 0.8 : 0.5;
      if (!(crop_fraction >= lo && crop_fraction <= 1.0)) {
        fail("crop fraction " + std::to_string(crop_fraction) + " outside [" + std::to_string(lo) + ", 1]");
      }
      break;
    }
    case AugmentKind::HorizontalFlip:
      break;
    case AugmentKind::Rotate90:
      if (quarter_turns < 0 || quarter_turns > 3) fail("quarter turns must be in [0, 3]");
      break;
    case AugmentKind::GaussianNoise:
      if (!(noise_sigma >= 0.0 && noise_sigma <= 0.25)) fail("noise sigma outside [0, 0.25]");
      break;
    case AugmentKind::BrightnessScale:
      if (!(brightness >= 0.6 && brightness <= 1.4)) fail("brightness factor outside [0.6, 1.4]");
      break;
    case AugmentKind::Cutout:
      if (!(cutout_area >= 0.0 && cutout_area <= 0.4)) fail("cutout area outside [0, 0.4]");
      break;
  }
}

AugmentationLevel AugmentationLevel::standard(AugmentLevelId id) {
  static const std::vector<AugmentKind> five = {AugmentKind::CropResize, AugmentKind::HorizontalFlip,
                                                AugmentKind::GaussianNoise, AugmentKind::BrightnessScale,
                                                AugmentKind::Cutout};
  AugmentationLevel level;
  level.level = id;
  switch (id) {
    case AugmentLevelId::A1:
      level.kinds = {AugmentKind::CropResize};
      level.intensity = Intensity::Mild;
      break;
    case AugmentLevelId::A2:
      level.kinds = {AugmentKind::CropResize};
      level.intensity = Intensity::Strong;
      break;
    case AugmentLevelId::A3:
      level.kinds = five;
      level.intensity = Intensity::Mild;
      break;
    case AugmentLevelId::A4:
      level.kinds = five;
      level.intensity = Intensity::Strong;
      break;
  }
  return level;
}

AugmentationLevel AugmentationLevel::parse(std::string_view name) {
  if (name == "A1") return standard(AugmentLevelId::A1);
  if (name == "A2") return standard(AugmentLevelId::A2);
  if (name == "A3") return standard(AugmentLevelId::A3);
  if (name == "A4") return standard(AugmentLevelId::A4);
  throw ValidationError("unknown augmentation level '" + std::string(name) + "' (expected A1..A4)");
}

namespace {

Image crop_resize(const Image& in, double fraction, Rng& rng) {
  const std::size_t w = in.width, h = in.height;
  const auto cw = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(w))), 1, w);
  const auto ch = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(h))), 1, h);
  const std::size_t x0 = rng.below(w - cw + 1);
  const std::size_t y0 = rng.below(h - ch + 1);
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t sy = y0 + y * ch / h;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t sx = x0 + x * cw / w;
      out.at(x, y) = in.at(sx, sy);
    }
  }
  return out;
}

Image flip(const Image& in) {
  Image out(in.width, in.height);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x) out.at(x, y) = in.at(in.width - 1 - x, y);
  return out;
}

Image rotate(const Image& in, int quarters) {
  if (quarters % 2 != 0 && in.width != in.height) {
    throw ValidationError("rotate90 by an odd number of quarter turns needs a square image");
  }
  Image out = in;
  const std::size_t n = in.width;
  for (int q = 0; q < quarters; ++q) {
    Image next(n, n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) next.at(y, n - 1 - x) = out.at(x, y);
    out = std::move(next);
  }
  return out;
}

}  // namespace

Image apply_augmentation(const Image& image, const AugmentationSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw ValidationError("malformed image");
  }
  Rng rng(seed);
  Image out;
  switch (spec.kind) {
    case AugmentKind::CropResize:
      out = crop_resize(image, spec.crop_fraction, rng);
      break;
    case AugmentKind::HorizontalFlip:
      out = flip(image);
      break;
    case AugmentKind::Rotate90:
      out = rotate(image, spec.quarter_turns);
      break;
    case AugmentKind::GaussianNoise:
      out = image;
      for (auto& p : out.pixels) p += static_cast<float>(spec.noise_sigma * rng.normal());
      break;
    case AugmentKind::BrightnessScale:
      out = image;
      for (auto& p : out.pixels) p = static_cast<float>(p * spec.brightness);
      break;
    case AugmentKind::Cutout: {
      out = image;
      const double area = spec.cutout_area * static_cast<double>(image.width * image.height);
      auto side = static_cast<std::size_t>(std::floor(std::sqrt(area)));
      side = std::min({side, image.width, image.height});
      if (side > 0) {
        const std::size_t x0 = rng.below(image.width - side + 1);
        const std::size_t y0 = rng.below(image.height - side + 1);
        for (std::size_t y = y0; y < y0 + side; ++y)
          for (std::size_t x = x0; x < x0 + side; ++x) out.at(x, y) = 0.0f;
      }
      break;
    }
  }
  out.clamp();
  return out;
}

std::vector<AugmentationSpec> sample_pipeline(const AugmentationLevel& level, std::uint64_t seed) {
  if (level.kinds.empty()) throw ValidationError("augmentation level has no kinds");
  Rng rng(seed);
  const bool mild = level.intensity == Intensity::Mild;
  const std::size_t count = 1 + rng.below(3);
  std::vector<AugmentationSpec> specs;
  specs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    AugmentationSpec s;
    s.kind = level.kinds[rng.below(level.kinds.size())];
    s.intensity = level.intensity;
    switch (s.kind) {
      case AugmentKind::CropResize:
        s.crop_fraction = mild ? rng.uniform(0.8, 1.0) : rng.uniform(0.5, 0.8);
        break;
      case AugmentKind::HorizontalFlip:
        break;
      case AugmentKind::Rotate90:
        s.quarter_turns = 1 + static_cast<int>(rng.below(3));
        break;
      case AugmentKind::GaussianNoise:
        s.noise_sigma = mild ? rng.uniform(0.0, 0.05) : rng.uniform(0.05, 0.25);
        break;
      case AugmentKind::BrightnessScale:
        s.brightness = mild ? rng.uniform(0.9, 1.1) : rng.uniform(0.6, 1.4);
        break;
      case AugmentKind::Cutout:
        s.cutout_area = mild ? rng.uniform(0.05, 0.15) : rng.uniform(0.15, 0.4);
        break;
    }
    specs.push_back(s);
  }
  return specs;
}

Image augment_view(const Image& image, const AugmentationLevel& level, std::uint64_t seed) {
  const auto specs = sample_pipeline(level, derive_seed(seed, 0));
  Image out = image;
  for (std::size_t i = 0; i < specs.size(); ++i) out = apply_augmentation(out, specs[i], derive_seed(seed, 1, i));
  return out;
}

}  // namespace bmssl
