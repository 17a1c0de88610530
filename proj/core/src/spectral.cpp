#include "bmssl/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double kStochasticTol = 1e-12;
constexpr double kDegenerateTol = 1e-8;
constexpr double kRankTol = 1e-10;
constexpr double kKernelTol = 1e-10;

Matrix to_eigen(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.at(r, c);
  return m;
}

Tensor from_eigen(const Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[k++] = m(r, c);
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(data));
}

Vector sqrt_marginal(const PositivePairChain& chain) {
  Vector s(static_cast<Eigen::Index>(chain.views()));
  for (std::size_t a = 0; a < chain.views(); ++a) s(static_cast<Eigen::Index>(a)) = std::sqrt(chain.marginal[a]);
  return s;
}

// D^{-1/2} J D^{-1/2}, built from the transition as D^{1/2} T D^{-1/2}.
Matrix symmetrized(const PositivePairChain& chain) {
  const Vector s = sqrt_marginal(chain);
  Matrix a = s.asDiagonal() * to_eigen(chain.transition) * s.cwiseInverse().asDiagonal();
  return 0.5 * (a + a.transpose());
}

// Orthonormal basis of span(D^{1/2} S) in the Euclidean metric.
Matrix whitened_basis(const PositivePairChain& chain, const Tensor& subspace) {
  if (subspace.rank() != 2 || subspace.rows() != chain.views()) {
    throw ShapeError("subspace " + shape_to_string(subspace.shape()) + " does not match " +
                     std::to_string(chain.views()) + " views");
  }
  const Matrix h = sqrt_marginal(chain).asDiagonal() * to_eigen(subspace);
  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) <= kRankTol * std::max(1.0, sv(0))) {
    throw ValidationError("subspace columns are not linearly independent");
  }
  return svd.matrixU();
}

double lambda_max(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

// m == 2: (h'Ph, h'Lh) traces an ellipse as h turns; solved in closed form.
double gap_two_views(const Matrix& p, const Matrix& lap, double eps) {
  auto coeffs = [](const Matrix& m) {
    // h = (cos t, sin t): h'Mh = c0 + c1 cos 2t + c2 sin 2t
    return std::array<double, 3>{0.5 * (m(0, 0) + m(1, 1)), 0.5 * (m(0, 0) - m(1, 1)), m(0, 1)};
  };
  const auto x = coeffs(p);
  const auto y = coeffs(lap);
  std::vector<double> angles;
  angles.push_back(std::atan2(x[2], x[1]));
  const double ry = std::hypot(y[1], y[2]);
  if (ry > 0.0) {
    const double c = (eps - y[0]) / ry;
    if (std::abs(c) <= 1.0) {
      const double base = std::atan2(y[2], y[1]);
      angles.push_back(base + std::acos(c));
      angles.push_back(base - std::acos(c));
    }
  }
  double best = -1.0;
  for (double phi : angles) {
    const double yv = y[0] + y[1] * std::cos(phi) + y[2] * std::sin(phi);
    if (yv <= eps + 1e-15) best = std::max(best, x[0] + x[1] * std::cos(phi) + x[2] * std::sin(phi));
  }
  if (best < 0.0) {
    // rounding left no candidate feasible; fall back to the minimiser of y
    const double phi = std::atan2(-y[2], -y[1]);
    best = x[0] + x[1] * std::cos(phi) + x[2] * std::sin(phi);
  }
  return std::clamp(best, 0.0, 1.0);
}

}  // namespace

void DiscreteViewSpace::validate() const {
  if (conditional.rank() != 2) throw ShapeError("conditional must be a [sources, views] matrix");
  if (prior.rank() != 1 || prior.size() != conditional.rows()) {
    throw ShapeError("prior " + shape_to_string(prior.shape()) + " does not match " +
                     std::to_string(conditional.rows()) + " sources");
  }
  double prior_sum = 0.0;
  for (std::size_t x = 0; x < sources(); ++x) {
    if (prior[x] < 0.0) throw ValidationError("prior has a negative entry");
    prior_sum += prior[x];
    double row = 0.0;
    for (std::size_t a = 0; a < views(); ++a) {
      if (conditional.at(x, a) < 0.0) throw ValidationError("conditional has a negative entry");
      row += conditional.at(x, a);
    }
    if (std::abs(row - 1.0) > 1e-12) {
      throw ValidationError("conditional row " + std::to_string(x) + " sums to " + std::to_string(row));
    }
  }
  if (std::abs(prior_sum - 1.0) > 1e-12) throw ValidationError("prior sums to " + std::to_string(prior_sum));
}

DiscreteViewSpace random_view_space(std::size_t sources, std::size_t views, std::uint64_t seed) {
  if (sources == 0 || views < 2) throw ValidationError("need at least one source and two views");
  Rng rng(derive_seed(seed, 0x5BEC));
  std::vector<double> cond(sources * views, 0.0);
  for (auto& c : cond)
    if (rng.uniform() < 0.6) c = rng.uniform(0.05, 1.0);
  for (std::size_t a = 0; a < views; ++a) {
    bool covered = false;
    for (std::size_t x = 0; x < sources; ++x) covered = covered || cond[x * views + a] > 0.0;
    if (!covered) cond[rng.below(sources) * views + a] = rng.uniform(0.05, 1.0);
  }
  for (std::size_t x = 0; x + 1 < sources; ++x) {
    const std::size_t a = rng.below(views);
    if (cond[x * views + a] == 0.0) cond[x * views + a] = rng.uniform(0.05, 1.0);
    if (cond[(x + 1) * views + a] == 0.0) cond[(x + 1) * views + a] = rng.uniform(0.05, 1.0);
  }
  for (std::size_t x = 0; x < sources; ++x) {
    double row = 0.0;
    for (std::size_t a = 0; a < views; ++a) row += cond[x * views + a];
    for (std::size_t a = 0; a < views; ++a) cond[x * views + a] /= row;
  }
  std::vector<double> prior(sources);
  double total = 0.0;
  for (auto& p : prior) total += (p = rng.uniform(0.2, 1.0));
  for (auto& p : prior) p /= total;
  DiscreteViewSpace space{Tensor({sources, views}, std::move(cond)), Tensor({sources}, std::move(prior))};
  space.validate();
  return space;
}

PositivePairChain build_chain(const DiscreteViewSpace& space) {
  space.validate();
  const std::size_t m = space.views();
  Tensor joint({m, m});
  for (std::size_t a1 = 0; a1 < m; ++a1) {
    for (std::size_t a2 = a1; a2 < m; ++a2) {
      double s = 0.0;
      for (std::size_t x = 0; x < space.sources(); ++x)
        s += space.conditional.at(x, a1) * space.conditional.at(x, a2) * space.prior[x];
      joint.at(a1, a2) = s;
      joint.at(a2, a1) = s;
    }
  }
  Tensor marginal({m});
  for (std::size_t a = 0; a < m; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < m; ++b) s += joint.at(a, b);
    if (!(s > 0.0)) throw ValidationError("view " + std::to_string(a) + " has zero marginal probability");
    marginal[a] = s;
  }
  Tensor transition({m, m});
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) transition.at(a, b) = joint.at(a, b) / marginal[a];
  for (std::size_t a = 0; a < m; ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < m; ++b) s += transition.at(a, b);
    if (std::abs(s - 1.0) > kStochasticTol) throw NumericError("transition row " + std::to_string(a) + " is not stochastic");
  }
  return {std::move(joint), std::move(marginal), std::move(transition)};
}

std::size_t connected_components(const PositivePairChain& chain) {
  const std::size_t m = chain.views();
  std::vector<std::size_t> parent(m);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b)
      if (chain.joint.at(a, b) > 0.0) parent[find(a)] = find(b);
  std::size_t count = 0;
  for (std::size_t a = 0; a < m; ++a) count += find(a) == a ? 1 : 0;
  return count;
}

EigenRepresentation top_eigenfunctions(const PositivePairChain& chain, std::size_t d) {
  const std::size_t m = chain.views();
  if (d < 1 || d > m) throw ValidationError("d must be in [1, " + std::to_string(m) + "], got " + std::to_string(d));
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(chain));
  if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");
  const Vector inv_sqrt = sqrt_marginal(chain).cwiseInverse();

  EigenRepresentation rep;
  rep.eigenvalues.resize(m);
  for (std::size_t i = 0; i < m; ++i) rep.eigenvalues[i] = es.eigenvalues()(static_cast<Eigen::Index>(m - 1 - i));
  Matrix f(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    Vector v = es.eigenvectors().col(static_cast<Eigen::Index>(m - 1 - i));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    f.col(static_cast<Eigen::Index>(i)) = inv_sqrt.asDiagonal() * v;
  }
  rep.functions = from_eigen(f);
  rep.degenerate_boundary = d < m && rep.eigenvalues[d - 1] - rep.eigenvalues[d] < kDegenerateTol;
  return rep;
}

double pair_variation(const PositivePairChain& chain, const std::vector<double>& g) {
  if (g.size() != chain.views()) throw ShapeError("function length does not match the view count");
  double s = 0.0;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = 0; b < g.size(); ++b) s += chain.joint.at(a, b) * (g[a] - g[b]) * (g[a] - g[b]);
  return s;
}

double minimax_gap(const PositivePairChain& chain, const Tensor& subspace, double eps) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ValidationError("eps must be finite and non-negative");
  const auto m = static_cast<Eigen::Index>(chain.views());
  const Matrix q = whitened_basis(chain, subspace);
  if (q.cols() >= m) return 0.0;
  const Matrix proj = Matrix::Identity(m, m) - q * q.transpose();
  const Matrix lap = 2.0 * (Matrix::Identity(m, m) - symmetrized(chain));

  if (eps == 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(lap);
    std::vector<Eigen::Index> kernel;
    for (Eigen::Index i = 0; i < m; ++i)
      if (es.eigenvalues()(i) < kKernelTol) kernel.push_back(i);
    if (kernel.empty()) return 0.0;
    Matrix z(m, static_cast<Eigen::Index>(kernel.size()));
    for (std::size_t k = 0; k < kernel.size(); ++k) z.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(kernel[k]);
    return std::clamp(lambda_max(z.transpose() * proj * z), 0.0, 1.0);
  }
  if (m == 2) return gap_two_views(proj, lap, eps);

  // For m >= 3 the joint numerical range of (P, Lap) is convex, so the
  // constrained maximum equals min over mu >= 0 of lambda_max(P - mu Lap) + mu eps.
  auto dual = [&](double mu) { return lambda_max(proj - mu * lap) + mu * eps; };
  double lo = 0.0, hi = 1.0 / eps;
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  double f1 = dual(x1), f2 = dual(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - ratio * (hi - lo);
      f1 = dual(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + ratio * (hi - lo);
      f2 = dual(x2);
    }
  }
  const double best = std::min({f1, f2, dual(0.0), dual(1.0 / eps)});
  return std::clamp(best, 0.0, 1.0);
}

Tensor random_subspace(const PositivePairChain& chain, std::size_t d, std::uint64_t seed) {
  const std::size_t m = chain.views();
  if (d < 1 || d > m) throw ValidationError("d must be in [1, " + std::to_string(m) + "]");
  Rng rng(seed);
  Matrix g(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c) g(r, c) = rng.normal();
  const Vector s = sqrt_marginal(chain);
  Eigen::HouseholderQR<Matrix> qr(s.asDiagonal() * g);
  const Matrix q = qr.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  return from_eigen(s.cwiseInverse().asDiagonal() * q);
}

GapComparison compare_with_random_subspaces(const PositivePairChain& chain, std::size_t d, double eps,
                                            std::size_t samples, std::uint64_t seed) {
  GapComparison out;
  out.eps = eps;
  out.top_gap = minimax_gap(chain, top_eigenfunctions(chain, d).functions, eps);
  out.random_count = samples;
  out.min_random_gap = samples == 0 ? 0.0 : 1.0;
  out.random_gaps.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double g = minimax_gap(chain, random_subspace(chain, d, derive_seed(seed, i)), eps);
    out.random_gaps.push_back(g);
    out.min_random_gap = std::min(out.min_random_gap, g);
    if (g < out.top_gap - kGapSlack) ++out.beaten;
  }
  return out;
}

void write_spectrum_csv(std::ostream& out, const std::vector<double>& eigenvalues) {
  out << "index,eigenvalue\n";
  out.precision(17);
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) out << i << ',' << eigenvalues[i] << '\n';
}

void write_gap_csv(std::ostream& out, const GapComparison& comparison) {
  out << "subspace_id,gap\n";
  out.precision(17);
  out << 0 << ',' << comparison.top_gap << '\n';
  for (std::size_t i = 0; i < comparison.random_gaps.size(); ++i) out << i + 1 << ',' << comparison.random_gaps[i] << '\n';
}

}  // namespace bmssl
