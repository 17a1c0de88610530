#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "bmssl/image.hpp"

namespace bmssl {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::int32_t kStrippedLabel = -1;

struct DatasetParams {
  std::size_t class_count = 16;
  std::size_t per_class = 20;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  std::vector<Image> images;
  // Hidden from training; kStrippedLabel once stripped.
  std::vector<std::int32_t> latent_class;
  DatasetParams params;

  std::size_t size() const noexcept { return images.size(); }
  // Distinct non-stripped labels in ascending order.
  std::vector<std::int32_t> classes() const;
};

// Eight pattern families (oriented bar, ring, checker, blob, corner gradient,
// two dots, cross, stripes), cycled with perturbed parameters beyond eight
// classes, rendered with position/amplitude jitter and pixel noise.
SyntheticDataset generate_dataset(std::size_t class_count, std::size_t per_class, std::uint64_t seed);

struct DatasetSplit {
  SyntheticDataset train_pool;   // labels stripped
  SyntheticDataset eval_classes; // labels kept
};

// Class-disjoint split; round(train_fraction * classes) classes go to training.
DatasetSplit split_dataset(const SyntheticDataset& dataset, double train_fraction, std::uint64_t seed);

// Leave-one-out nearest-centroid accuracy on raw pixels.
double nearest_centroid_loo_accuracy(const SyntheticDataset& dataset);

// Little-endian "BMSD" container.
void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

}  // namespace bmssl
