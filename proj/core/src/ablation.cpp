#include "bmssl/ablation.hpp"

#include <charconv>
#include <ostream>

#include "bmssl/error.hpp"

namespace bmssl {

std::string_view ablation_name(AblationKind kind) {
  switch (kind) {
    case AblationKind::Delta: return "delta";
    case AblationKind::Augmentation: return "augmentation";
    case AblationKind::Structure: return "structure";
  }
  return "?";
}

AblationKind parse_ablation(std::string_view name) {
  for (auto k : {AblationKind::Delta, AblationKind::Augmentation, AblationKind::Structure})
    if (ablation_name(k) == name) return k;
  throw ValidationError("unknown ablation '" + std::string(name) + "' (expected delta, augmentation or structure)");
}

std::vector<AblationCell> ablation_grid(AblationKind kind, const RunConfig& base) {
  std::vector<AblationCell> cells;
  switch (kind) {
    case AblationKind::Delta:
      for (std::size_t d : {1, 5, 10, 15, 20}) {
        RunConfig c = base;
        c.mode = RunMode::Bmssl;
        c.delta = d;
        cells.push_back({"delta=" + std::to_string(d), c});
      }
      break;
    case AblationKind::Augmentation:
      for (auto id : {AugmentLevelId::A1, AugmentLevelId::A2, AugmentLevelId::A3, AugmentLevelId::A4}) {
        RunConfig c = base;
        c.augmentation = id;
        cells.push_back({std::string(level_name(id)), c});
      }
      break;
    case AblationKind::Structure: {
      const std::pair<const char*, RunMode> structures[] = {
          {"M1", RunMode::Scratch}, {"M2", RunMode::MetricOnly}, {"M3", RunMode::Bmssl}};
      for (const auto& [name, mode] : structures) {
        RunConfig c = base;
        c.mode = mode;
        cells.push_back({name, c});
      }
      break;
    }
  }
  for (const auto& cell : cells) cell.config.validate();
  return cells;
}

std::vector<AblationOutcome> run_ablation(AblationKind kind, const RunConfig& base, const OutcomeCallback& on_cell) {
  const auto cells = ablation_grid(kind, base);
  const DataBundle data = prepare_data(base);
  std::vector<AblationOutcome> out;
  for (const auto& cell : cells) {
    RunConfig c = cell.config;
    c.eval_every = 0;
    const TrainResult r = train(c, data);
    AblationOutcome o;
    o.setting = cell.setting;
    o.mode = c.mode;
    o.accuracy = r.final_accuracy;
    o.meta_steps = r.checkpoint.meta_step;
    if (c.record_time && o.meta_steps > 0 && r.seconds > 0.0) o.steps_per_second = o.meta_steps / r.seconds;
    if (on_cell) on_cell(o);
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_ablation_csv(std::ostream& out, AblationKind kind, const std::vector<AblationOutcome>& rows) {
  out << kAblationHeader << '\n';
  for (const auto& r : rows) {
    out << ablation_name(kind) << ',' << r.setting << ',' << mode_name(r.mode) << ',' << num(r.accuracy) << ','
        << r.meta_steps << ',' << (r.steps_per_second ? num(*r.steps_per_second) : std::string()) << '\n';
  }
}

}  // namespace bmssl
