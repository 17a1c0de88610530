#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bmssl/graph.hpp"

namespace bmssl {

enum class GradcheckScale : std::uint8_t { Tiny, Small };

GradcheckScale parse_gradcheck_scale(std::string_view name);

struct GradcheckEntry {
  std::string check;  // "op:<name>", "loss:total", "meta:standard", "meta:bootstrapped"
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t parameters = 0;  // dimension of the differentiated inputs
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 0.0;
  bool all_passed() const;
};

// Called with the check name and the analytic gradient before comparison;
// tests use it to corrupt a gradient on purpose.
using GradientHook = std::function<void(const std::string& check, LeafValues& analytic)>;

struct GradcheckOptions {
  GradcheckScale scale = GradcheckScale::Tiny;
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  double step = 1e-4;  // five-point stencil
  GradientHook hook;
};

// One entry per differentiable op kind, then the composite loss, the
// second-order meta-gradient and the bootstrapped KL meta-gradient.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

void write_gradcheck_csv(std::ostream& out, const GradcheckReport& report);

}  // namespace bmssl
