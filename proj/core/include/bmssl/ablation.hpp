#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bmssl/run_config.hpp"
#include "bmssl/training.hpp"

namespace bmssl {

enum class AblationKind : std::uint8_t { Delta, Augmentation, Structure };

std::string_view ablation_name(AblationKind kind);
AblationKind parse_ablation(std::string_view name);

struct AblationCell {
  std::string setting;  // "delta=5", "A3", "M2"
  RunConfig config;
};

struct AblationOutcome {
  std::string setting;
  RunMode mode = RunMode::Bmssl;
  double accuracy = 0.0;
  std::size_t meta_steps = 0;
  std::optional<double> steps_per_second;  // empty without meta steps or timing
};

// delta: bmssl with delta in {1, 5, 10, 15, 20}
// augmentation: the base mode at A1..A4
// structure: M1 scratch, M2 metric-only, M3 bmssl
std::vector<AblationCell> ablation_grid(AblationKind kind, const RunConfig& base);

using OutcomeCallback = std::function<void(const AblationOutcome&)>;

std::vector<AblationOutcome> run_ablation(AblationKind kind, const RunConfig& base, const OutcomeCallback& on_cell = {});

inline constexpr const char* kAblationHeader = "kind,setting,mode,accuracy,meta_steps,meta_steps_per_second";

void write_ablation_csv(std::ostream& out, AblationKind kind, const std::vector<AblationOutcome>& rows);

}  // namespace bmssl
