#include "bmssl/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "bmssl/error.hpp"

namespace bmssl {

std::string_view mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::Scratch: return "scratch";
    case RunMode::MetricOnly: return "metric-only";
    case RunMode::MetaSsl: return "metassl";
    case RunMode::Bmssl: return "bmssl";
  }
  return "?";
}

RunMode parse_mode(std::string_view name) {
  for (auto m : {RunMode::Scratch, RunMode::MetricOnly, RunMode::MetaSsl, RunMode::Bmssl})
    if (mode_name(m) == name) return m;
  throw ValidationError("unknown mode '" + std::string(name) + "' (expected scratch, metric-only, metassl or bmssl)");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValidationError(std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ValidationError(std::string(key) + ": expected a finite number, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return std::to_string(c.*member); },
          [member, key](RunConfig& c, std::string_view v) { c.*member = static_cast<T>(parse_uint(key, v)); }};
}

Field double_field(const char* key, double RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return format_double(c.*member); },
          [member, key](RunConfig& c, std::string_view v) { c.*member = parse_double(key, v); }};
}

Field bool_field(const char* key, bool RunConfig::*member) {
  return {key, [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, key](RunConfig& c, std::string_view v) { c.*member = parse_bool(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"mode", [](const RunConfig& c) { return std::string(mode_name(c.mode)); },
       [](RunConfig& c, std::string_view v) { c.mode = parse_mode(v); }},
      size_field("N", &RunConfig::n),
      size_field("K", &RunConfig::k),
      size_field("M", &RunConfig::m),
      size_field("M1", &RunConfig::m1),
      {"augmentation", [](const RunConfig& c) { return std::string(level_name(c.augmentation)); },
       [](RunConfig& c, std::string_view v) { c.augmentation = AugmentationLevel::parse(v).level; }},
      size_field("L", &RunConfig::inner_steps),
      size_field("delta", &RunConfig::delta),
      double_field("alpha", &RunConfig::alpha),
      double_field("beta", &RunConfig::beta),
      double_field("lambda", &RunConfig::lambda),
      double_field("tau", &RunConfig::tau),
      bool_field("first_order", &RunConfig::first_order),
      {"target_objective", [](const RunConfig& c) { return std::string(target_objective_name(c.target_objective)); },
       [](RunConfig& c, std::string_view v) { c.target_objective = parse_target_objective(v); }},
      size_field("meta_steps", &RunConfig::meta_steps),
      size_field("hidden", &RunConfig::hidden),
      size_field("projection", &RunConfig::projection),
      size_field("eval_way", &RunConfig::eval_way),
      size_field("eval_shot", &RunConfig::eval_shot),
      size_field("eval_episodes", &RunConfig::eval_episodes),
      size_field("eval_query", &RunConfig::eval_query),
      size_field("eval_inner_steps", &RunConfig::eval_inner_steps),
      size_field("eval_every", &RunConfig::eval_every),
      size_field("class_count", &RunConfig::class_count),
      size_field("per_class", &RunConfig::per_class),
      double_field("train_fraction", &RunConfig::train_fraction),
      size_field("data_seed", &RunConfig::data_seed),
      {"data_path", [](const RunConfig& c) { return c.data_path; },
       [](RunConfig& c, std::string_view v) { c.data_path = std::string(v); }},
      size_field("seed", &RunConfig::seed),
      bool_field("record_time", &RunConfig::record_time),
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) { throw ValidationError(key + ": " + what); };
  if (k == 0) fail("K", "must be at least 1");
  if (n == 0 || n % k != 0) fail("N", "must be a positive multiple of K");
  if (n / k < 2) fail("N", "N/K must be at least 2 for a classification task");
  if (m1 == 0 || m1 >= m) fail("M1", "must satisfy 1 <= M1 < M");
  if (!(alpha > 0.0)) fail("alpha", "must be positive");
  if (!(beta > 0.0)) fail("beta", "must be positive");
  if (inner_steps == 0 && mode != RunMode::Scratch) fail("L", "must be at least 1 outside scratch mode");
  if (delta == 0 && mode == RunMode::Bmssl) fail("delta", "must be at least 1 in bmssl mode");
  if (lambda < 0.0) fail("lambda", "must be non-negative");
  if (!(tau > 0.0)) fail("tau", "must be positive");
  if (hidden == 0) fail("hidden", "must be positive");
  if (projection == 0) fail("projection", "must be positive");
  if (eval_way < 1) fail("eval_way", "must be at least 1");
  if (eval_way > way()) fail("eval_way", "cannot exceed the training way N/K = " + std::to_string(way()));
  if (eval_shot < 1) fail("eval_shot", "must be at least 1");
  if (eval_query < 1) fail("eval_query", "must be at least 1");
  if (eval_episodes < 1) fail("eval_episodes", "must be at least 1");
  if (class_count < 4) fail("class_count", "must be at least 4");
  if (per_class < eval_shot + eval_query) fail("per_class", "must cover eval_shot + eval_query images");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction", "must lie in (0, 1)");
}

TaskParams RunConfig::task_params(std::uint64_t task_seed) const {
  TaskParams p;
  p.n = n;
  p.k = k;
  p.m = m;
  p.m1 = m1;
  p.level = AugmentationLevel::standard(augmentation);
  p.seed = task_seed;
  return p;
}

BilevelConfig RunConfig::bilevel() const {
  BilevelConfig b;
  b.inner_steps = inner_steps;
  b.delta = delta;
  b.alpha = alpha;
  b.beta = beta;
  b.first_order = first_order;
  b.target = target_objective;
  return b;
}

ModelDims RunConfig::model_dims() const {
  ModelDims d;
  d.input = kImageSide * kImageSide;
  d.hidden = hidden;
  d.projection = projection;
  d.classes = way();
  return d;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(*this) + "\n";
  return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.serialize() == b.serialize(); }

}  // namespace bmssl
