#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"
#include "bmssl/spectral.hpp"

using namespace bmssl;

namespace {

double p_inner(const PositivePairChain& c, const std::vector<double>& f, const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a) s += c.marginal[a] * f[a] * g[a];
  return s;
}

std::vector<double> column(const Tensor& t, std::size_t c) {
  std::vector<double> v(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) v[r] = t.at(r, c);
  return v;
}

// Squared p-weighted residual of g after projecting onto the columns of s,
// via Gram-Schmidt in the p inner product.
double residual(const PositivePairChain& c, const Tensor& s, std::vector<double> g) {
  std::vector<std::vector<double>> basis;
  for (std::size_t j = 0; j < s.cols(); ++j) {
    auto v = column(s, j);
    for (const auto& b : basis) {
      const double d = p_inner(c, v, b);
      for (std::size_t a = 0; a < v.size(); ++a) v[a] -= d * b[a];
    }
    const double n = std::sqrt(p_inner(c, v, v));
    for (auto& x : v) x /= n;
    basis.push_back(v);
  }
  for (const auto& b : basis) {
    const double d = p_inner(c, g, b);
    for (std::size_t a = 0; a < g.size(); ++a) g[a] -= d * b[a];
  }
  return p_inner(c, g, g);
}

// Brute-force gap on three views: scan the unit sphere of E_p[g^2] = 1.
double scanned_gap(const PositivePairChain& c, const Tensor& s, double eps, int steps) {
  double best = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double th = M_PI * i / steps;
    for (int j = 0; j < 2 * steps; ++j) {
      const double ph = M_PI * j / steps;
      const double h[3] = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
      std::vector<double> g(3);
      for (int a = 0; a < 3; ++a) g[a] = h[a] / std::sqrt(c.marginal[a]);
      if (pair_variation(c, g) <= eps) best = std::max(best, residual(c, s, g));
    }
  }
  return best;
}

DiscreteViewSpace single_source_two_views(double q) {
  return {Tensor::matrix(1, 2, {q, 1.0 - q}), Tensor::vector({1.0})};
}

}  // namespace

TEST(Chain, SingleSourceHasRankOneTransition) {
  const PositivePairChain c = build_chain(single_source_two_views(0.3));
  EXPECT_NEAR(c.joint.at(0, 0), 0.09, 1e-15);
  EXPECT_NEAR(c.joint.at(0, 1), 0.21, 1e-15);
  EXPECT_NEAR(c.marginal[0], 0.3, 1e-15);
  EXPECT_NEAR(c.transition.at(1, 0), 0.3, 1e-15);
  const EigenRepresentation rep = top_eigenfunctions(c, 1);
  EXPECT_NEAR(rep.eigenvalues[0], 1.0, 1e-12);
  EXPECT_NEAR(rep.eigenvalues[1], 0.0, 1e-12);
}

TEST(Chain, RandomSpacesAreValid) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(5, 8, seed));
    double total = 0.0;
    for (std::size_t a = 0; a < 8; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < 8; ++b) {
        EXPECT_EQ(c.joint.at(a, b), c.joint.at(b, a));
        row += c.transition.at(a, b);
        total += c.joint.at(a, b);
      }
      EXPECT_NEAR(row, 1.0, 1e-12);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(connected_components(c), 1u);
  }
}

TEST(Chain, BlockDiagonalJoint) {
  // Two sources with disjoint view sets.
  const DiscreteViewSpace space{Tensor::matrix(2, 4, {0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.25, 0.75}),
                                Tensor::vector({0.4, 0.6})};
  const PositivePairChain c = build_chain(space);
  EXPECT_EQ(c.joint.at(0, 2), 0.0);
  EXPECT_EQ(c.joint.at(1, 3), 0.0);
  EXPECT_EQ(connected_components(c), 2u);
  const EigenRepresentation rep = top_eigenfunctions(c, 2);
  EXPECT_NEAR(rep.eigenvalues[0], 1.0, 1e-12);
  EXPECT_NEAR(rep.eigenvalues[1], 1.0, 1e-12);
  // Two zero-variation functions exist, so a one-dimensional subspace cannot
  // capture both: the eps = 0 gap is positive.
  EXPECT_GT(minimax_gap(c, top_eigenfunctions(c, 1).functions, 0.0), 0.1);
  EXPECT_NEAR(minimax_gap(c, rep.functions, 0.0), 0.0, 1e-10);
}

TEST(Chain, InvalidSpacesRejected) {
  EXPECT_THROW(build_chain({Tensor::matrix(1, 2, {0.5, 0.6}), Tensor::vector({1.0})}),
               ValidationError);
  EXPECT_THROW(build_chain({Tensor::matrix(1, 2, {0.5, 0.5}), Tensor::vector({0.5})}),
               ValidationError);
  // A view no source produces has zero marginal.
  EXPECT_THROW(build_chain({Tensor::matrix(1, 3, {0.5, 0.5, 0.0}), Tensor::vector({1.0})}),
               ValidationError);
  EXPECT_THROW(random_view_space(3, 1, 0), ValidationError);
}

TEST(Eigen, SpectrumAndOrthonormality) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(6, 9, seed));
    const EigenRepresentation rep = top_eigenfunctions(c, 4);
    EXPECT_NEAR(rep.eigenvalues[0], 1.0, 1e-12);
    for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
      EXPECT_GE(rep.eigenvalues[i], -1e-12);
      EXPECT_LE(rep.eigenvalues[i], 1.0 + 1e-12);
      if (i > 0) EXPECT_LE(rep.eigenvalues[i], rep.eigenvalues[i - 1]);
    }
    for (std::size_t a = 0; a < 9; ++a) EXPECT_NEAR(std::abs(rep.functions.at(a, 0)), 1.0, 1e-10);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto fi = column(rep.functions, i);
      // T f = lambda f
      for (std::size_t a = 0; a < 9; ++a) {
        double tf = 0.0;
        for (std::size_t b = 0; b < 9; ++b) tf += c.transition.at(a, b) * fi[b];
        EXPECT_NEAR(tf, rep.eigenvalues[i] * fi[a], 1e-10);
      }
      EXPECT_NEAR(pair_variation(c, fi), 2.0 * (1.0 - rep.eigenvalues[i]), 1e-10);
      for (std::size_t j = 0; j < 4; ++j)
        EXPECT_NEAR(p_inner(c, fi, column(rep.functions, j)), i == j ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(Eigen, DimensionRange) {
  const PositivePairChain c = build_chain(random_view_space(3, 5, 1));
  EXPECT_THROW(top_eigenfunctions(c, 0), ValidationError);
  EXPECT_THROW(top_eigenfunctions(c, 6), ValidationError);
}

TEST(Gap, EigenSubspaceClosedForm) {
  // Worst g puts eps / (2(1 - lambda_{d+1})) of its mass on the next eigenfunction.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(6, 8, seed));
    for (std::size_t d : {1, 2, 4}) {
      const EigenRepresentation rep = top_eigenfunctions(c, d);
      if (rep.degenerate_boundary) continue;
      const double unit = 2.0 * (1.0 - rep.eigenvalues[d]);
      for (double frac : {0.1, 0.5, 0.9, 1.5}) {
        EXPECT_NEAR(minimax_gap(c, rep.functions, frac * unit), std::min(1.0, frac), 1e-7)
            << "seed " << seed << " d " << d << " frac " << frac;
      }
    }
  }
}

TEST(Gap, MatchesBruteForceOnThreeViews) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(3, 3, seed));
    const Tensor s = random_subspace(c, 1, derive_seed(seed, 9));
    const EigenRepresentation rep = top_eigenfunctions(c, 1);
    const double eps = 0.5 * 2.0 * (1.0 - rep.eigenvalues[1]);
    const double exact = minimax_gap(c, s, eps);
    const double scanned = scanned_gap(c, s, eps, 300);
    EXPECT_LE(scanned, exact + 1e-9);
    EXPECT_NEAR(scanned, exact, 2e-3);
  }
}

TEST(Gap, TwoViewsMatchesBruteForce) {
  const DiscreteViewSpace space{Tensor::matrix(2, 2, {0.8, 0.2, 0.3, 0.7}),
                                Tensor::vector({0.5, 0.5})};
  const PositivePairChain c = build_chain(space);
  const Tensor s = Tensor::matrix(2, 1, {1.0, 0.2});
  for (double eps : {0.05, 0.2, 0.5}) {
    double best = 0.0;
    for (int i = 0; i < 200000; ++i) {
      const double t = 2.0 * M_PI * i / 200000;
      const std::vector<double> g = {std::cos(t) / std::sqrt(c.marginal[0]), std::sin(t) / std::sqrt(c.marginal[1])};
      if (pair_variation(c, g) <= eps) best = std::max(best, residual(c, s, g));
    }
    const double exact = minimax_gap(c, s, eps);
    EXPECT_LE(best, exact + 1e-12) << eps;
    EXPECT_NEAR(exact, best, 1e-4) << eps;
  }
}

TEST(Gap, FullDimensionIsZero) {
  const PositivePairChain c = build_chain(random_view_space(4, 6, 3));
  EXPECT_EQ(minimax_gap(c, random_subspace(c, 6, 1), 0.3), 0.0);
  EXPECT_EQ(minimax_gap(c, top_eigenfunctions(c, 6).functions, 0.3), 0.0);
}

TEST(Gap, ZeroEpsIsConstantResidual) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(5, 7, seed));
    EXPECT_NEAR(minimax_gap(c, top_eigenfunctions(c, 2).functions, 0.0), 0.0, 1e-10);
    const Tensor s = random_subspace(c, 2, seed);
    EXPECT_NEAR(minimax_gap(c, s, 0.0), residual(c, s, std::vector<double>(7, 1.0)), 1e-9);
  }
}

TEST(Gap, RankDeficientSubspaceRejected) {
  const PositivePairChain c = build_chain(random_view_space(3, 4, 0));
  Tensor s({4, 2});
  for (std::size_t a = 0; a < 4; ++a) s.at(a, 0) = s.at(a, 1) = 1.0 + a;
  EXPECT_THROW(minimax_gap(c, s, 0.1), ValidationError);
  EXPECT_THROW(minimax_gap(c, Tensor({3, 1}), 0.1), ShapeError);
  EXPECT_THROW(minimax_gap(c, random_subspace(c, 1, 0), -0.1), ValidationError);
}

TEST(Gap, FeasibleFunctionsNeverExceedGap) {
  Rng rng(11);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(5, 7, seed));
    const Tensor s = random_subspace(c, 3, seed + 100);
    const double eps = 0.4;
    const double gap = minimax_gap(c, s, eps);
    for (int i = 0; i < 2000; ++i) {
      std::vector<double> g(7);
      for (auto& v : g) v = rng.normal();
      const double n = std::sqrt(p_inner(c, g, g));
      for (auto& v : g) v /= n;
      if (pair_variation(c, g) <= eps) EXPECT_LE(residual(c, s, g), gap + 1e-9);
    }
  }
}

TEST(Gap, EigenSubspaceBeatsRandom) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PositivePairChain c = build_chain(random_view_space(8, 10, seed));
    const EigenRepresentation rep = top_eigenfunctions(c, 3);
    const double eps = 0.5 * 2.0 * (1.0 - rep.eigenvalues[3]);
    const GapComparison cmp = compare_with_random_subspaces(c, 3, eps, 200, seed);
    EXPECT_EQ(cmp.beaten, 0u);
    EXPECT_GE(cmp.min_random_gap, cmp.top_gap - kGapSlack);
    EXPECT_EQ(cmp.random_gaps.size(), 200u);
  }
}

TEST(Gap, RandomSubspaceIsOrthonormal) {
  const PositivePairChain c = build_chain(random_view_space(4, 6, 2));
  const Tensor s = random_subspace(c, 3, 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p_inner(c, column(s, i), column(s, j)), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Gap, CsvLayout) {
  GapComparison cmp;
  cmp.top_gap = 0.5;
  cmp.random_gaps = {0.75};
  std::ostringstream out;
  write_gap_csv(out, cmp);
  EXPECT_EQ(out.str(), "subspace_id,gap\n0,0.5\n1,0.75\n");
  std::ostringstream spec;
  write_spectrum_csv(spec, {1.0, 0.25});
  EXPECT_EQ(spec.str(), "index,eigenvalue\n0,1\n1,0.25\n");
}
