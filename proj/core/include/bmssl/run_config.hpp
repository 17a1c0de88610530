#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bmssl/augment.hpp"
#include "bmssl/bilevel.hpp"
#include "bmssl/model.hpp"
#include "bmssl/taskgen.hpp"

namespace bmssl {

// scratch: no outer loop, random initialization for every evaluation task.
// metric-only: inner SGD on one shared set of weights carried across episodes.
// metassl: outer step through the query loss at w^L.
// bmssl: outer step through KL to the bootstrapped target.
enum class RunMode : std::uint8_t { Scratch, MetricOnly, MetaSsl, Bmssl };

std::string_view mode_name(RunMode mode);
RunMode parse_mode(std::string_view name);

struct RunConfig {
  RunMode mode = RunMode::Bmssl;

  // task construction
  std::size_t n = 16;
  std::size_t k = 4;
  std::size_t m = 6;
  std::size_t m1 = 3;
  AugmentLevelId augmentation = AugmentLevelId::A4;

  // optimisation
  std::size_t inner_steps = 5;  // L
  std::size_t delta = 5;
  double alpha = 0.05;
  double beta = 0.01;
  double lambda = 1.0;
  double tau = 0.5;
  bool first_order = false;
  TargetObjective target_objective = TargetObjective::Support;
  std::size_t meta_steps = 1000;

  // model
  std::size_t hidden = 64;
  std::size_t projection = 16;

  // evaluation
  std::size_t eval_way = 4;
  std::size_t eval_shot = 1;
  std::size_t eval_episodes = 200;
  std::size_t eval_query = 15;
  std::size_t eval_inner_steps = 5;
  std::size_t eval_every = 0;  // 0: only after the last meta step

  // data
  std::size_t class_count = 16;
  std::size_t per_class = 20;
  double train_fraction = 0.5;
  std::uint64_t data_seed = 1;
  std::string data_path;  // empty: generate in memory from the fields above

  std::uint64_t seed = 0;
  bool record_time = true;  // false leaves wallclock_seconds empty

  // Throws ValidationError naming the offending key.
  void validate() const;

  std::size_t way() const { return n / k; }
  TaskParams task_params(std::uint64_t task_seed) const;
  BilevelConfig bilevel() const;
  LossWeights loss_weights() const { return {lambda, tau}; }
  ModelDims model_dims() const;

  // One key=value per line in a fixed key order.
  std::string serialize() const;
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::string& path);

  // Applies a single key=value; unknown keys are a validation error.
  void set(std::string_view key, std::string_view value);
  static std::vector<std::string> keys();
};

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace bmssl
