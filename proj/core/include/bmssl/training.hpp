#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bmssl/checkpoint.hpp"
#include "bmssl/run_config.hpp"
#include "bmssl/synth_data.hpp"

namespace bmssl {

struct MetricsRow {
  std::size_t meta_step = 0;
  double outer_loss = 0.0;
  std::optional<double> kl_value;
  double mean_inner_loss = 0.0;
  std::optional<double> eval_accuracy;
  std::optional<double> wallclock_seconds;
};

inline constexpr const char* kMetricsHeader =
    "meta_step,outer_loss,kl_value,mean_inner_loss,eval_accuracy,wallclock_seconds";

std::string format_metrics_row(const MetricsRow& row);

// Writes the header on open and flushes after every row.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;
  void write(const MetricsRow& row);

 private:
  std::FILE* file_;
  std::string path_;
};

struct DataBundle {
  SyntheticDataset train_pool;    // labels stripped
  SyntheticDataset eval_classes;  // held-out labeled classes
};

// Loads config.data_path when set, otherwise generates the dataset in memory,
// then splits it by class.
DataBundle prepare_data(const RunConfig& config);

struct FewShotSettings {
  std::size_t way = 4;
  std::size_t shot = 1;
  std::size_t query = 15;
  std::size_t episodes = 200;
  std::size_t inner_steps = 5;
  double alpha = 0.05;
  LossWeights weights;
  std::uint64_t seed = 0;
  // When set, every episode adapts from a fresh random initialization instead
  // of theta (theta then only supplies the layout).
  std::optional<std::uint64_t> random_init_seed;
};

FewShotSettings fewshot_settings(const RunConfig& config);

struct FewShotResult {
  double mean_accuracy = 0.0;
  std::vector<double> episode_accuracy;
};

FewShotResult evaluate_fewshot(const ParamSet& theta, const SyntheticDataset& eval_classes,
                               const FewShotSettings& settings);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRow> rows;
  double final_accuracy = 0.0;
  double seconds = 0.0;  // meta-training time, evaluation excluded
};

using RowCallback = std::function<void(const MetricsRow&)>;

// Scratch mode performs no meta steps; its checkpoint holds the
// initialization and evaluation re-initializes per episode.
TrainResult train(const RunConfig& config, const DataBundle& data, const RowCallback& on_row = {});

}  // namespace bmssl
