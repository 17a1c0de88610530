#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "bmssl/byte_io.hpp"
#include "bmssl/error.hpp"
#include "bmssl/synth_data.hpp"

using namespace bmssl;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bmssl_test_" + name)).string();
}

bool same(const SyntheticDataset& a, const SyntheticDataset& b) {
  if (a.size() != b.size() || a.latent_class != b.latent_class) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(a.images[i], b.images[i])) return false;
  return true;
}

}  // namespace

TEST(Generate, DeterministicAndSeedSensitive) {
  EXPECT_TRUE(same(generate_dataset(8, 5, 3), generate_dataset(8, 5, 3)));
  EXPECT_FALSE(same(generate_dataset(8, 5, 3), generate_dataset(8, 5, 4)));
}

TEST(Generate, PixelsInUnitRange) {
  const auto ds = generate_dataset(16, 10, 1);
  EXPECT_EQ(ds.size(), 160u);
  for (const auto& img : ds.images) {
    EXPECT_EQ(img.width, kImageSide);
    EXPECT_EQ(img.height, kImageSide);
    for (float p : img.pixels) {
      EXPECT_GE(p, 0.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
}

TEST(Generate, BarVersusRingSeparable) {
  for (std::uint64_t seed = 0; seed < 5; ++seed)
    EXPECT_GE(nearest_centroid_loo_accuracy(generate_dataset(2, 20, seed)), 0.95) << "seed " << seed;
}

TEST(Generate, DefaultConfigurationSeparable) {
  EXPECT_GE(nearest_centroid_loo_accuracy(generate_dataset(16, 20, 1)), 0.95);
}

// Every pair of classes in the default 16-class dataset clears the floor.
TEST(Generate, PairwiseSeparable) {
  const auto ds = generate_dataset(16, 20, 1);
  for (std::int32_t a = 0; a < 16; ++a) {
    for (std::int32_t b = a + 1; b < 16; ++b) {
      SyntheticDataset pair;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.latent_class[i] == a || ds.latent_class[i] == b) {
          pair.images.push_back(ds.images[i]);
          pair.latent_class.push_back(ds.latent_class[i]);
        }
      }
      EXPECT_GE(nearest_centroid_loo_accuracy(pair), 0.95) << a << " vs " << b;
    }
  }
}

TEST(Generate, InvalidCounts) {
  EXPECT_THROW(generate_dataset(1, 20, 0), ValidationError);
  EXPECT_THROW(generate_dataset(4, 1, 0), ValidationError);
}

TEST(Split, HalfOfEightClasses) {
  const auto ds = generate_dataset(8, 4, 0);
  const auto split = split_dataset(ds, 0.5, 11);
  EXPECT_EQ(split.eval_classes.classes().size(), 4u);
  EXPECT_EQ(split.train_pool.size() + split.eval_classes.size(), ds.size());
  for (auto c : split.train_pool.latent_class) EXPECT_EQ(c, kStrippedLabel);
  EXPECT_TRUE(split.train_pool.classes().empty());
}

TEST(Split, PartitionAndDisjointness) {
  const auto ds = generate_dataset(8, 4, 0);
  const auto split = split_dataset(ds, 0.5, 11);
  // Match images back to their source classes.
  std::multiset<std::int32_t> train_classes;
  for (const auto& img : split.train_pool.images) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (bitwise_equal(ds.images[i], img)) {
        train_classes.insert(ds.latent_class[i]);
        ++hits;
      }
    }
    EXPECT_EQ(hits, 1u);
  }
  for (auto c : split.eval_classes.classes()) EXPECT_EQ(train_classes.count(c), 0u);
  EXPECT_EQ(std::set<std::int32_t>(train_classes.begin(), train_classes.end()).size(), 4u);
}

TEST(Split, SameSeedSameSplit) {
  const auto ds = generate_dataset(8, 4, 0);
  EXPECT_EQ(split_dataset(ds, 0.5, 2).eval_classes.classes(), split_dataset(ds, 0.5, 2).eval_classes.classes());
}

TEST(Split, TooFewClasses) {
  const auto ds = generate_dataset(3, 4, 0);
  EXPECT_THROW(split_dataset(ds, 0.5, 0), ValidationError);
  EXPECT_THROW(split_dataset(generate_dataset(8, 4, 0), 1.0, 0), ValidationError);
}

TEST(DatasetFile, RoundTripBitwise) {
  const auto ds = generate_dataset(4, 3, 5);
  const auto path = temp_path("roundtrip.bin");
  save_dataset(ds, path);
  EXPECT_TRUE(same(load_dataset(path), ds));
  std::filesystem::remove(path);
}

TEST(DatasetFile, CorruptFilesRejected) {
  const auto ds = generate_dataset(2, 2, 5);
  const auto path = temp_path("corrupt.bin");
  save_dataset(ds, path);
  auto bytes = read_file_bytes(path);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  write_file_bytes(path, truncated);
  EXPECT_THROW(load_dataset(path), IoError);

  auto trailing = bytes;
  trailing.push_back(0);
  write_file_bytes(path, trailing);
  EXPECT_THROW(load_dataset(path), IoError);

  auto magic = bytes;
  magic[0] = 'X';
  write_file_bytes(path, magic);
  EXPECT_THROW(load_dataset(path), IoError);

  std::filesystem::remove(path);
  EXPECT_THROW(load_dataset(path), IoError);
}
