#pragma once

#include <string>
#include <vector>

#include "bmssl/graph.hpp"

namespace bmssl {

// Relative error with denominator max(|analytic|, |numeric|, 1e-12).
double relative_error(double analytic, double numeric);

// Two-point: (f(x+h) - f(x-h)) / 2h. Five-point adds the +-2h samples and
// cancels the h^2 error term.
enum class FdStencil { TwoPoint, FivePoint };

struct FdReport {
  double max_relative_error = 0.0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Central differences on every coordinate of the named leaves, compared with
// the reverse-mode gradient. The graph is left holding its original values.
FdReport finite_difference_check(ExprGraph& graph, NodeId output, const std::vector<std::string>& wrt, double step,
                                 FdStencil stencil = FdStencil::TwoPoint);

// Same comparison against a caller-supplied analytic gradient, e.g. one that
// was produced outside the graph (meta-gradients) or deliberately corrupted.
FdReport compare_with_finite_differences(ExprGraph& graph, NodeId output, const LeafValues& analytic, double step,
                                         FdStencil stencil = FdStencil::TwoPoint);

}  // namespace bmssl
