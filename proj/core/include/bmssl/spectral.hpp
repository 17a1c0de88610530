#pragma once

// Positive-pair Markov chain on a finite view space, its top eigenfunctions,
// and the worst-case approximation gap of a representation subspace.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bmssl/tensor.hpp"

namespace bmssl {

struct DiscreteViewSpace {
  Tensor conditional;  // [sources, m], p(a | x)
  Tensor prior;        // [sources], p(x)

  std::size_t views() const { return conditional.cols(); }
  std::size_t sources() const { return conditional.rows(); }
  void validate() const;
};

// Sparse random conditionals; every view is reachable and consecutive sources
// share a view, so the positive-pair graph is connected.
DiscreteViewSpace random_view_space(std::size_t sources, std::size_t views, std::uint64_t seed);

struct PositivePairChain {
  Tensor joint;       // [m, m], symmetric
  Tensor marginal;    // [m]
  Tensor transition;  // [m, m], row-stochastic

  std::size_t views() const { return marginal.size(); }
};

PositivePairChain build_chain(const DiscreteViewSpace& space);

// Number of connected components of the graph with edges where joint > 0.
std::size_t connected_components(const PositivePairChain& chain);

struct EigenRepresentation {
  std::vector<double> eigenvalues;  // all m, descending
  Tensor functions;                 // [m, d], columns p-orthonormal
  bool degenerate_boundary = false; // lambda_d and lambda_{d+1} too close to split
};

EigenRepresentation top_eigenfunctions(const PositivePairChain& chain, std::size_t d);

// Positive-pair variation E_{p+}[(g(a1) - g(a2))^2] of a function on views.
double pair_variation(const PositivePairChain& chain, const std::vector<double>& g);

// max over g with E_p[g^2] = 1 and variation <= eps of the squared p-weighted
// residual of projecting g onto span(subspace columns).
double minimax_gap(const PositivePairChain& chain, const Tensor& subspace, double eps);

// Gaussian [m, d] matrix orthonormalized under the p-weighted inner product.
Tensor random_subspace(const PositivePairChain& chain, std::size_t d, std::uint64_t seed);

struct GapComparison {
  double eps = 0.0;
  double top_gap = 0.0;
  double min_random_gap = 0.0;
  std::size_t random_count = 0;
  std::size_t beaten = 0;  // random subspaces with gap < top_gap - slack
  std::vector<double> random_gaps;
};

inline constexpr double kGapSlack = 1e-9;

GapComparison compare_with_random_subspaces(const PositivePairChain& chain, std::size_t d, double eps,
                                            std::size_t samples, std::uint64_t seed);

void write_spectrum_csv(std::ostream& out, const std::vector<double>& eigenvalues);
// Row 0 is the eigen-subspace, rows 1.. the random subspaces.
void write_gap_csv(std::ostream& out, const GapComparison& comparison);

}  // namespace bmssl
