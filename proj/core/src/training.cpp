#include "bmssl/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "bmssl/bilevel.hpp"
#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

namespace {

std::string cell(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }

void require_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite at meta step " + std::to_string(step));
}

Tensor stack_images(const SyntheticDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(idx.size());
  for (auto i : idx) ptrs.push_back(&ds.images[i]);
  return views_tensor(ptrs);
}

double query_accuracy(const ParamSet& w, const Tensor& query, const std::vector<std::size_t>& labels) {
  ExprGraph graph;
  const ParamNodes nodes = register_constants(graph, w);
  const Tensor& logits = graph.value(forward(graph, nodes, graph.constant(query)).logits);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    correct += best == labels[r] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

ParamSet with_zero_head(ParamSet w) {
  for (const char* name : {kClassifierW, kClassifierB})
    for (auto& v : w.at(name).data()) v = 0.0;
  return w;
}

// Inner SGD on one shared weight set, episode after episode. Pseudo-labels
// mean nothing across episodes, so each episode starts from a zero classifier.
MetaUpdateReport metric_only_step(const ParamSet& w, std::span<const InnerObjective* const> tasks,
                                  const RunConfig& config) {
  MetaUpdateReport r;
  r.theta_before = w;
  ParamSet current = w;
  std::vector<double> inner;
  double query = 0.0;
  for (const InnerObjective* task : tasks) {
    current = sgd_steps(with_zero_head(std::move(current)), *task, config.inner_steps, config.alpha, &inner);
    ExprGraph graph;
    query += graph.value(task->query_loss(graph, register_constants(graph, current))).item();
  }
  r.outer_loss = query / static_cast<double>(tasks.size());
  double s = 0.0;
  for (double v : inner) s += v;
  r.mean_inner_loss = s / static_cast<double>(inner.size());
  r.theta_after = with_zero_head(std::move(current));
  return r;
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  return std::to_string(row.meta_step) + ',' + cell(row.outer_loss) + ',' + cell(row.kl_value) + ',' +
         cell(row.mean_inner_loss) + ',' + cell(row.eval_accuracy) + ',' + cell(row.wallclock_seconds);
}

MetricsWriter::MetricsWriter(const std::string& path) : file_(std::fopen(path.c_str(), "wb")), path_(path) {
  if (!file_) throw IoError("cannot open metrics file " + path + " for writing");
  std::fprintf(file_, "%s\n", kMetricsHeader);
  std::fflush(file_);
}

MetricsWriter::~MetricsWriter() {
  if (file_) std::fclose(file_);
}

void MetricsWriter::write(const MetricsRow& row) {
  const std::string line = format_metrics_row(row) + "\n";
  if (std::fputs(line.c_str(), file_) < 0 || std::fflush(file_) != 0) throw IoError("write failed on " + path_);
}

DataBundle prepare_data(const RunConfig& config) {
  const SyntheticDataset full = config.data_path.empty()
                                    ? generate_dataset(config.class_count, config.per_class, config.data_seed)
                                    : load_dataset(config.data_path);
  DatasetSplit split = split_dataset(full, config.train_fraction, config.data_seed);
  return {std::move(split.train_pool), std::move(split.eval_classes)};
}

FewShotSettings fewshot_settings(const RunConfig& config) {
  FewShotSettings s;
  s.way = config.eval_way;
  s.shot = config.eval_shot;
  s.query = config.eval_query;
  s.episodes = config.eval_episodes;
  s.inner_steps = config.eval_inner_steps;
  s.alpha = config.alpha;
  s.weights = config.loss_weights();
  s.seed = derive_seed(config.seed, 0xE7A1);
  if (config.mode == RunMode::Scratch) s.random_init_seed = derive_seed(config.seed, 0x5C7A);
  return s;
}

FewShotResult evaluate_fewshot(const ParamSet& theta, const SyntheticDataset& eval_classes,
                               const FewShotSettings& settings) {
  if (settings.way == 0 || settings.shot == 0 || settings.query == 0 || settings.episodes == 0) {
    throw ValidationError("few-shot evaluation needs positive way, shot, query and episode counts");
  }
  const auto classes = eval_classes.classes();
  if (classes.size() < settings.way) {
    throw ValidationError("few-shot evaluation needs " + std::to_string(settings.way) + " classes, have " +
                          std::to_string(classes.size()));
  }
  std::vector<std::vector<std::size_t>> members(classes.size());
  for (std::size_t i = 0; i < eval_classes.size(); ++i) {
    const auto c = eval_classes.latent_class[i];
    if (c == kStrippedLabel) continue;
    members[static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), c) - classes.begin())].push_back(i);
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (members[c].size() < settings.shot + settings.query) {
      throw ValidationError("class " + std::to_string(classes[c]) + " has " + std::to_string(members[c].size()) +
                            " images, need " + std::to_string(settings.shot + settings.query));
    }
  }
  const ModelDims dims = infer_dims(theta);
  if (settings.way > dims.classes) {
    throw ValidationError("model has " + std::to_string(dims.classes) + " outputs, cannot evaluate " +
                          std::to_string(settings.way) + "-way");
  }

  FewShotResult result;
  double total = 0.0;
  for (std::size_t e = 0; e < settings.episodes; ++e) {
    Rng rng(derive_seed(settings.seed, e));
    std::vector<std::size_t> order(classes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    std::vector<std::size_t> support_idx, query_idx, support_labels, query_labels;
    for (std::size_t j = 0; j < settings.way; ++j) {
      auto pool = members[order[j]];
      rng.shuffle(pool.begin(), pool.end());
      for (std::size_t s = 0; s < settings.shot; ++s) {
        support_idx.push_back(pool[s]);
        support_labels.push_back(j);
      }
      for (std::size_t q = 0; q < settings.query; ++q) {
        query_idx.push_back(pool[settings.shot + q]);
        query_labels.push_back(j);
      }
    }
    const ParamSet start = settings.random_init_seed
                               ? init_params(dims, derive_seed(*settings.random_init_seed, e))
                               : theta;
    const ParamSet init = settings.way < dims.classes ? restrict_classifier(start, settings.way) : start;
    const Tensor query = stack_images(eval_classes, query_idx);
    const EpisodeObjective task(stack_images(eval_classes, support_idx), support_labels, query, query_labels,
                                settings.weights);
    const ParamSet adapted = sgd_steps(init, task, settings.inner_steps, settings.alpha);
    const double acc = query_accuracy(adapted, query, query_labels);
    result.episode_accuracy.push_back(acc);
    total += acc;
  }
  result.mean_accuracy = total / static_cast<double>(settings.episodes);
  return result;
}

TrainResult train(const RunConfig& config, const DataBundle& data, const RowCallback& on_row) {
  config.validate();
  if (data.train_pool.size() < config.n) {
    throw ValidationError("training pool has " + std::to_string(data.train_pool.size()) + " images, N = " +
                          std::to_string(config.n));
  }
  const FewShotSettings eval = fewshot_settings(config);
  TrainResult result;
  result.checkpoint.config = config;
  ParamSet theta = init_params(config.model_dims(), derive_seed(config.seed, 0x1417));

  const std::size_t steps = config.mode == RunMode::Scratch ? 0 : config.meta_steps;
  const BilevelConfig bilevel = config.bilevel();
  const auto start = std::chrono::steady_clock::now();
  double train_seconds = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    const auto step_start = std::chrono::steady_clock::now();
    const auto pool = resample_pool(data.train_pool, config.n, derive_seed(config.seed, 0xD0, t));
    const EpisodeBatch batch = construct_tasks(pool, config.task_params(derive_seed(config.seed, 0x7A, t)));
    const auto owned = episode_objectives(batch, config.loss_weights());
    const auto tasks = raw_pointers(owned);

    MetaUpdateReport report;
    MetricsRow row;
    row.meta_step = t;
    switch (config.mode) {
      case RunMode::MetaSsl: report = meta_step_standard(theta, tasks, bilevel); break;
      case RunMode::Bmssl:
        report = meta_step_bootstrapped(theta, tasks, bilevel);
        row.kl_value = report.kl_value;
        break;
      case RunMode::MetricOnly: report = metric_only_step(theta, tasks, config); break;
      case RunMode::Scratch: break;
    }
    row.outer_loss = report.outer_loss;
    row.mean_inner_loss = report.mean_inner_loss;
    require_finite(row.outer_loss, "outer loss", t);
    require_finite(row.mean_inner_loss, "inner loss", t);
    theta = std::move(report.theta_after);
    train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - step_start).count();

    const bool scheduled = t == steps || (config.eval_every > 0 && t % config.eval_every == 0);
    if (scheduled) row.eval_accuracy = evaluate_fewshot(theta, data.eval_classes, eval).mean_accuracy;
    if (config.record_time) {
      row.wallclock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (on_row) on_row(row);
    result.rows.push_back(row);
  }
  result.final_accuracy = result.rows.empty() || !result.rows.back().eval_accuracy
                              ? evaluate_fewshot(theta, data.eval_classes, eval).mean_accuracy
                              : *result.rows.back().eval_accuracy;
  result.checkpoint.params = std::move(theta);
  result.checkpoint.meta_step = steps;
  result.seconds = train_seconds;
  return result;
}

}  // namespace bmssl
