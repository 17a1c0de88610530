#pragma once

#include <cstdint>
#include <vector>

#include "bmssl/augment.hpp"
#include "bmssl/image.hpp"
#include "bmssl/synth_data.hpp"

namespace bmssl {

struct LabeledView {
  Image image;
  std::size_t label = 0;
  // Position of the view among the M augmentations of its source.
  std::size_t view_index = 0;
};

// One n-way episode. Pseudo-labels are episode-local: label j means the view
// was generated from source_ids[j].
struct Episode {
  std::size_t way = 0;
  std::vector<LabeledView> support;
  std::vector<LabeledView> query;
  std::vector<std::size_t> source_ids;  // indices into the pool
};

struct TaskParams {
  std::size_t n = 16;   // images per batch
  std::size_t k = 4;    // episodes per batch
  std::size_t m = 6;    // views per image
  std::size_t m1 = 3;   // support views per image; query gets m - m1
  AugmentationLevel level = AugmentationLevel::standard(AugmentLevelId::A4);
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpisodeBatch {
  std::vector<Episode> episodes;
  TaskParams params;
};

// Splits the first N pool images into K blocks of N/K sources. Each source
// gets M augmented views (per-view seed derived from seed, episode, class and
// view index); the first M1 go to the support set.
EpisodeBatch construct_tasks(const std::vector<Image>& pool, const TaskParams& params);

// N images without replacement.
std::vector<Image> resample_pool(const SyntheticDataset& dataset, std::size_t n, std::uint64_t seed);
std::vector<std::size_t> resample_indices(std::size_t dataset_size, std::size_t n, std::uint64_t seed);

}  // namespace bmssl
