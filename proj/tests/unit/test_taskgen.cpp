#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"
#include "bmssl/synth_data.hpp"
#include "bmssl/taskgen.hpp"

using namespace bmssl;

namespace {

std::vector<Image> small_pool(std::size_t n, std::uint64_t seed) {
  const SyntheticDataset ds = generate_dataset(std::max<std::size_t>(2, (n + 1) / 2), 2, seed);
  std::vector<Image> pool(ds.images.begin(), ds.images.begin() + static_cast<std::ptrdiff_t>(n));
  return pool;
}

TaskParams params(std::size_t n, std::size_t k, std::size_t m, std::size_t m1, std::uint64_t seed = 1) {
  TaskParams p;
  p.n = n;
  p.k = k;
  p.m = m;
  p.m1 = m1;
  p.seed = seed;
  return p;
}

}  // namespace

TEST(ConstructTasks, DefaultCounts) {
  const auto batch = construct_tasks(small_pool(16, 0), params(16, 4, 6, 3));
  ASSERT_EQ(batch.episodes.size(), 4u);
  for (const auto& ep : batch.episodes) {
    EXPECT_EQ(ep.way, 4u);
    EXPECT_EQ(ep.support.size(), 12u);
    EXPECT_EQ(ep.query.size(), 12u);
  }
}

TEST(ConstructTasks, OneEpisodeOneShot) {
  const auto batch = construct_tasks(small_pool(4, 0), params(4, 1, 2, 1));
  ASSERT_EQ(batch.episodes.size(), 1u);
  EXPECT_EQ(batch.episodes[0].way, 4u);
  EXPECT_EQ(batch.episodes[0].support.size(), 4u);
  EXPECT_EQ(batch.episodes[0].query.size(), 4u);
}

TEST(ConstructTasks, Errors) {
  EXPECT_THROW(construct_tasks(small_pool(16, 0), params(16, 3, 6, 3)), ValidationError);
  EXPECT_THROW(construct_tasks(small_pool(8, 0), params(16, 4, 6, 3)), ValidationError);
  EXPECT_THROW(construct_tasks(small_pool(16, 0), params(16, 4, 6, 6)), ValidationError);
  EXPECT_THROW(construct_tasks(small_pool(16, 0), params(16, 4, 6, 0)), ValidationError);
  EXPECT_THROW(construct_tasks(small_pool(16, 0), params(16, 4, 1, 1)), ValidationError);
}

TEST(ConstructTasks, Deterministic) {
  const auto pool = small_pool(8, 3);
  const auto a = construct_tasks(pool, params(8, 2, 4, 2, 42));
  const auto b = construct_tasks(pool, params(8, 2, 4, 2, 42));
  const auto c = construct_tasks(pool, params(8, 2, 4, 2, 43));
  bool differs = false;
  for (std::size_t e = 0; e < a.episodes.size(); ++e) {
    for (std::size_t i = 0; i < a.episodes[e].support.size(); ++i) {
      EXPECT_TRUE(bitwise_equal(a.episodes[e].support[i].image, b.episodes[e].support[i].image));
      differs |= !bitwise_equal(a.episodes[e].support[i].image, c.episodes[e].support[i].image);
    }
    for (std::size_t i = 0; i < a.episodes[e].query.size(); ++i)
      EXPECT_TRUE(bitwise_equal(a.episodes[e].query[i].image, b.episodes[e].query[i].image));
  }
  EXPECT_TRUE(differs);
}

// Randomized valid tuples: counts, label partition by source, disjoint sources.
TEST(ConstructTasks, InvariantsOverRandomTuples) {
  Rng rng(2024);
  const auto pool = small_pool(24, 9);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t k = 1 + rng.below(4);
    const std::size_t way = 1 + rng.below(24 / k);
    const std::size_t m = 2 + rng.below(4);
    const std::size_t m1 = 1 + rng.below(m - 1);
    const auto batch = construct_tasks(pool, params(way * k, k, m, m1, rng.next()));
    ASSERT_EQ(batch.episodes.size(), k);
    std::set<std::size_t> all_sources;
    for (const auto& ep : batch.episodes) {
      EXPECT_EQ(ep.way, way);
      EXPECT_EQ(ep.support.size(), way * m1);
      EXPECT_EQ(ep.query.size(), way * (m - m1));
      ASSERT_EQ(ep.source_ids.size(), way);
      for (auto s : ep.source_ids) EXPECT_TRUE(all_sources.insert(s).second);
      std::map<std::size_t, std::set<std::size_t>> views_by_label;
      for (const auto& v : ep.support) {
        EXPECT_LT(v.label, way);
        EXPECT_LT(v.view_index, m1);
        EXPECT_TRUE(views_by_label[v.label].insert(v.view_index).second);
      }
      for (const auto& v : ep.query) {
        EXPECT_LT(v.label, way);
        EXPECT_GE(v.view_index, m1);
        EXPECT_TRUE(views_by_label[v.label].insert(v.view_index).second);
      }
      EXPECT_EQ(views_by_label.size(), way);
      for (const auto& [label, views] : views_by_label) EXPECT_EQ(views.size(), m);
    }
  }
}

TEST(Resample, FullSizeIsPermutation) {
  const auto idx = resample_indices(50, 50, 7);
  std::vector<std::size_t> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Resample, SeedBehaviour) {
  EXPECT_EQ(resample_indices(1000, 16, 3), resample_indices(1000, 16, 3));
  EXPECT_NE(resample_indices(1000, 16, 3), resample_indices(1000, 16, 4));
  const auto idx = resample_indices(1000, 16, 3);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 16u);
}

TEST(Resample, TooManyRejected) {
  EXPECT_THROW(resample_indices(10, 11, 0), ValidationError);
  const SyntheticDataset ds = generate_dataset(2, 3, 0);
  EXPECT_THROW(resample_pool(ds, 7, 0), ValidationError);
  EXPECT_EQ(resample_pool(ds, 6, 0).size(), 6u);
}
