#include "bmssl/finite_difference.hpp"

#include <algorithm>
#include <cmath>

#include "bmssl/error.hpp"

namespace bmssl {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

FdReport compare_with_finite_differences(ExprGraph& graph, NodeId output, const LeafValues& analytic, double step,
                                         FdStencil stencil) {
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
  if (graph.value(output).size() != 1) throw ShapeError("finite-difference output must be scalar");

  LeafValues original;
  for (const auto& [name, grad] : analytic) {
    auto id = graph.find_leaf(name);
    if (!id) throw ValidationError("finite difference: unknown leaf '" + name + "'");
    if (graph.value(*id).shape() != grad.shape()) throw ShapeError("finite difference: gradient shape mismatch for '" + name + "'");
    original.emplace(name, graph.value(*id));
  }

  FdReport report;
  for (const auto& [name, grad] : analytic) {
    const Tensor& base = original.at(name);
    for (std::size_t i = 0; i < base.size(); ++i) {
      Tensor probe = base;
      auto at = [&](double offset) {
        probe[i] = base[i] + offset;
        graph.evaluate({{name, probe}});
        return graph.value(output).item();
      };
      const double d1 = at(step) - at(-step);
      double numeric = d1 / (2.0 * step);
      if (stencil == FdStencil::FivePoint) {
        const double d2 = at(2.0 * step) - at(-2.0 * step);
        numeric = (8.0 * d1 - d2) / (12.0 * step);
      }
      graph.evaluate({{name, base}});

      const double err = relative_error(grad[i], numeric);
      ++report.coordinates;
      if (err > report.max_relative_error || report.worst_leaf.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_leaf = name;
        report.worst_index = i;
        report.worst_analytic = grad[i];
        report.worst_numeric = numeric;
      }
    }
  }
  graph.evaluate(original);
  return report;
}

FdReport finite_difference_check(ExprGraph& graph, NodeId output, const std::vector<std::string>& wrt, double step,
                                 FdStencil stencil) {
  const LeafValues analytic = graph.gradient(output, wrt);
  return compare_with_finite_differences(graph, output, analytic, step, stencil);
}

}  // namespace bmssl
