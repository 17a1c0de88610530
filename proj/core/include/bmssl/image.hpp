#pragma once

#include <cstddef>
#include <vector>

namespace bmssl {

// Single-channel row-major image with pixels in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0.0f) {}

  float at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  float& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::size_t size() const noexcept { return pixels.size(); }

  void clamp();

  friend bool operator==(const Image&, const Image&) = default;
};

// Bitwise pixel equality (distinguishes -0.0f from 0.0f).
bool bitwise_equal(const Image& a, const Image& b);

}  // namespace bmssl
