#include "bmssl/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <set>

#include "bmssl/byte_io.hpp"
#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

std::vector<std::int32_t> SyntheticDataset::classes() const {
  std::set<std::int32_t> s;
  for (auto c : latent_class)
    if (c != kStrippedLabel) s.insert(c);
  return {s.begin(), s.end()};
}

namespace {

constexpr double kCenter = 7.5;
constexpr double kPi = std::numbers::pi;

struct Pattern {
  std::size_t family = 0;
  double a = 0.0;  // family-specific primary parameter
  double b = 0.0;  // family-specific secondary parameter
};

// Canonical parameters for variants 0..2 of each family; later variants draw
// perturbed parameters from the class seed.
Pattern class_pattern(std::size_t cls, std::uint64_t seed) {
  Pattern p;
  p.family = cls % 8;
  const std::size_t variant = cls / 8;
  static constexpr double table[8][3][2] = {
      {{kPi / 4, 0}, {3 * kPi / 4, 0}, {0.0, 0}},      // bar: angle
      {{5.5, 0}, {7.5, 0}, {3.5, 0}},                  // ring: radius
      {{10.0, 0}, {10.0, 1}, {16.0, 1}},                // checker: period, phase flip
      {{4.0, 0}, {3.5, -5.0}, {3.5, 5.0}},             // blob: sigma, offset
      {{1, 1}, {-1, 1}, {0, 1}},                       // corner gradient: direction
      {{10.0, 0}, {10.0, kPi / 2}, {12.0, kPi / 4}},    // two dots: separation, angle
      {{0.0, 2.0}, {kPi / 8, 2.0}, {kPi / 4, 2.0}},  // cross: rotation, arm width
      {{14.0, 0}, {14.0, kPi / 2}, {14.0, kPi / 4}},   // stripes: period, orientation
  };
  if (variant < 3) {
    p.a = table[p.family][variant][0];
    p.b = table[p.family][variant][1];
    return p;
  }
  Rng rng(derive_seed(seed, 0xC1A55, cls));
  const double ja = rng.uniform(-0.3, 0.3);
  const double jb = rng.uniform(-0.3, 0.3);
  const auto& base = table[p.family][variant % 3];
  p.a = base[0] * (1.0 + ja);
  p.b = base[1] == 0.0 ? base[1] : base[1] * (1.0 + jb);
  if (p.family == 2 || p.family == 4) p.b = base[1] + (p.family == 4 ? jb : 0.0);
  return p;
}

double ridge(double d, double width) { return std::exp(-d * d / (2.0 * width * width)); }

double pattern_value(const Pattern& p, double u, double v) {
  switch (p.family) {
    case 0: {  // oriented bar
      const double c = std::cos(p.a), s = std::sin(p.a);
      const double across = -s * u + c * v;
      return ridge(across, 2.5);
    }
    case 1:  // ring
      return ridge(std::hypot(u, v) - p.a, 1.6);
    case 2: {  // checker
      const double phase = p.b == 0.0 ? 1.0 : -1.0;
      const double w = 2.0 * kPi / p.a;
      return 0.5 + 0.5 * phase * std::sin(w * u) * std::sin(w * v);
    }
    case 3:  // blob
      return ridge(std::hypot(u - p.b, v + std::abs(p.b)), p.a);
    case 4: {  // corner gradient
      const double norm = std::hypot(p.a, p.b);
      const double t = (p.a * u + p.b * v) / (norm * kCenter);
      return std::clamp(t, 0.0, 1.0);
    }
    case 5: {  // two dots
      const double dx = 0.5 * p.a * std::cos(p.b), dy = 0.5 * p.a * std::sin(p.b);
      return std::min(1.0, ridge(std::hypot(u - dx, v - dy), 2.5) + ridge(std::hypot(u + dx, v + dy), 2.5));
    }
    case 6: {  // cross
      const double c = std::cos(p.a), s = std::sin(p.a);
      const double x = c * u + s * v, y = -s * u + c * v;
      return std::max(ridge(x, p.b), ridge(y, p.b));
    }
    default: {  // stripes
      const double c = std::cos(p.b), s = std::sin(p.b);
      const double t = -s * u + c * v;
      return 0.5 - 0.5 * std::cos(2.0 * kPi * t / p.a);
    }
  }
}

Image render(const Pattern& p, Rng& rng) {
  const double dx = rng.uniform(-2.0, 2.0);
  const double dy = rng.uniform(-2.0, 2.0);
  const double amplitude = rng.uniform(0.8, 1.2);
  Image img(kImageSide, kImageSide);
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      const double u = static_cast<double>(x) - kCenter - dx;
      const double v = static_cast<double>(y) - kCenter - dy;
      const double value = amplitude * pattern_value(p, u, v) + 0.05 * rng.normal();
      img.at(x, y) = static_cast<float>(value);
    }
  }
  img.clamp();
  return img;
}

}  // namespace

SyntheticDataset generate_dataset(std::size_t class_count, std::size_t per_class, std::uint64_t seed) {
  if (class_count < 2) throw ValidationError("class_count must be at least 2");
  if (per_class < 2) throw ValidationError("per_class must be at least 2");
  SyntheticDataset ds;
  ds.params = {class_count, per_class, seed};
  ds.images.reserve(class_count * per_class);
  for (std::size_t c = 0; c < class_count; ++c) {
    const Pattern pattern = class_pattern(c, seed);
    for (std::size_t i = 0; i < per_class; ++i) {
      Rng rng(derive_seed(seed, c, i));
      ds.images.push_back(render(pattern, rng));
      ds.latent_class.push_back(static_cast<std::int32_t>(c));
    }
  }
  return ds;
}

DatasetSplit split_dataset(const SyntheticDataset& dataset, double train_fraction, std::uint64_t seed) {
  auto classes = dataset.classes();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(classes.size())));
  if (n_train < 2 || classes.size() - n_train < 2) {
    throw ValidationError("split needs at least 2 classes on each side, have " + std::to_string(classes.size()));
  }
  Rng rng(derive_seed(seed, 0x5917));
  rng.shuffle(classes.begin(), classes.end());
  const std::set<std::int32_t> train(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_train));

  DatasetSplit out;
  out.train_pool.params = dataset.params;
  out.eval_classes.params = dataset.params;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (train.contains(dataset.latent_class[i])) {
      out.train_pool.images.push_back(dataset.images[i]);
      out.train_pool.latent_class.push_back(kStrippedLabel);
    } else {
      out.eval_classes.images.push_back(dataset.images[i]);
      out.eval_classes.latent_class.push_back(dataset.latent_class[i]);
    }
  }
  return out;
}

double nearest_centroid_loo_accuracy(const SyntheticDataset& dataset) {
  const auto classes = dataset.classes();
  if (classes.size() < 2) throw ValidationError("centroid accuracy needs labeled data with 2+ classes");
  const std::size_t dim = dataset.images.front().size();
  std::vector<std::vector<double>> sums(classes.size(), std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(classes.size(), 0);
  auto class_index = [&](std::int32_t c) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), c) - classes.begin());
  };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto k = class_index(dataset.latent_class[i]);
    for (std::size_t j = 0; j < dim; ++j) sums[k][j] += dataset.images[i].pixels[j];
    ++counts[k];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto own = class_index(dataset.latent_class[i]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const bool self = k == own;
      const double n = static_cast<double>(counts[k] - (self ? 1 : 0));
      if (n <= 0) continue;
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double x = dataset.images[i].pixels[j];
        const double centroid = (sums[k][j] - (self ? x : 0.0)) / n;
        d += (x - centroid) * (x - centroid);
      }
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    if (best_k == own) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {
constexpr char kDatasetMagic[4] = {'B', 'M', 'S', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const SyntheticDataset& dataset, const std::filesystem::path& path) {
  ByteWriter w;
  w.put_bytes(std::string_view(kDatasetMagic, 4));
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.size()));
  const std::size_t width = dataset.images.empty() ? kImageSide : dataset.images.front().width;
  const std::size_t height = dataset.images.empty() ? kImageSide : dataset.images.front().height;
  w.put<std::uint16_t>(static_cast<std::uint16_t>(width));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(height));
  w.put<std::uint16_t>(1);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Image& img = dataset.images[i];
    if (img.width != width || img.height != height) throw ValidationError("dataset images must share dimensions");
    w.put<std::int32_t>(dataset.latent_class[i]);
    for (float p : img.pixels) w.put<float>(p);
  }
  write_file_bytes(path.string(), w.bytes());
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
  ByteReader r(read_file_bytes(path.string()), path.string());
  if (r.get_bytes(4) != std::string_view(kDatasetMagic, 4)) throw IoError(path.string() + ": bad magic, not a BMSD file");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) throw IoError(path.string() + ": unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  const auto width = r.get<std::uint16_t>();
  const auto height = r.get<std::uint16_t>();
  const auto channels = r.get<std::uint16_t>();
  if (channels != 1) throw IoError(path.string() + ": only single-channel images are supported");
  if (width == 0 || height == 0) throw IoError(path.string() + ": zero image dimension");
  const std::size_t record = sizeof(std::int32_t) + std::size_t{width} * height * sizeof(float);
  if (count != r.remaining() / record || r.remaining() % record != 0) {
    throw IoError(path.string() + ": image count " + std::to_string(count) + " does not match the file size");
  }
  SyntheticDataset ds;
  ds.images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.latent_class.push_back(r.get<std::int32_t>());
    Image img(width, height);
    for (auto& p : img.pixels) p = r.get<float>();
    ds.images.push_back(std::move(img));
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes after image data");
  const auto classes = ds.classes();
  ds.params.class_count = classes.size();
  ds.params.per_class = classes.empty() ? 0 : count / classes.size();
  return ds;
}

}  // namespace bmssl
