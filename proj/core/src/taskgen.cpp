#include "bmssl/taskgen.hpp"

#include <numeric>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

void TaskParams::validate() const {
  if (n == 0 || k == 0) throw ValidationError("N and K must be positive");
  if (n % k != 0) throw ValidationError("N=" + std::to_string(n) + " is not divisible by K=" + std::to_string(k));
  if (m < 2) throw ValidationError("M must be at least 2");
  if (m1 < 1 || m1 > m - 1) throw ValidationError("M1 must be in [1, M-1]");
}

EpisodeBatch construct_tasks(const std::vector<Image>& pool, const TaskParams& params) {
  params.validate();
  if (pool.size() < params.n) {
    throw ValidationError("pool holds " + std::to_string(pool.size()) + " images, need N=" + std::to_string(params.n));
  }
  const std::size_t way = params.n / params.k;
  EpisodeBatch batch;
  batch.params = params;
  batch.episodes.resize(params.k);
  for (std::size_t e = 0; e < params.k; ++e) {
    Episode& ep = batch.episodes[e];
    ep.way = way;
    ep.support.reserve(way * params.m1);
    ep.query.reserve(way * (params.m - params.m1));
    for (std::size_t c = 0; c < way; ++c) {
      const std::size_t source = e * way + c;
      ep.source_ids.push_back(source);
      for (std::size_t v = 0; v < params.m; ++v) {
        LabeledView view{augment_view(pool[source], params.level, derive_seed(params.seed, e, c, v)), c, v};
        (v < params.m1 ? ep.support : ep.query).push_back(std::move(view));
      }
    }
  }
  return batch;
}

std::vector<std::size_t> resample_indices(std::size_t dataset_size, std::size_t n, std::uint64_t seed) {
  if (dataset_size == 0) throw ValidationError("cannot sample from an empty dataset");
  if (n > dataset_size) {
    throw ValidationError("cannot draw " + std::to_string(n) + " images without replacement from " +
                          std::to_string(dataset_size));
  }
  std::vector<std::size_t> idx(dataset_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n slots are the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(dataset_size - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

std::vector<Image> resample_pool(const SyntheticDataset& dataset, std::size_t n, std::uint64_t seed) {
  std::vector<Image> out;
  for (auto i : resample_indices(dataset.size(), n, seed)) out.push_back(dataset.images[i]);
  return out;
}

}  // namespace bmssl
