#pragma once

// Two-level optimization: inner SGD adaptation, the standard second-order
// meta-gradient through the adapted weights, and the bootstrapped update that
// matches the L-step predictive distribution to a detached (L + delta)-step
// target under KL.

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "bmssl/graph.hpp"
#include "bmssl/model.hpp"
#include "bmssl/params.hpp"
#include "bmssl/taskgen.hpp"

namespace bmssl {

// A task as seen by the bilevel engine.
class InnerObjective {
 public:
  virtual ~InnerObjective() = default;
  virtual NodeId support_loss(ExprGraph& graph, const ParamNodes& w) const = 0;
  virtual NodeId query_loss(ExprGraph& graph, const ParamNodes& w) const = 0;
  // Row-wise log class probabilities on the query set.
  virtual NodeId query_log_distribution(ExprGraph& graph, const ParamNodes& w) const = 0;
};

// Cross-entropy + lambda * contrastive loss on one episode. The contrastive
// term is used on a part only when each label in it has two or more views.
class EpisodeObjective final : public InnerObjective {
 public:
  EpisodeObjective(const Episode& episode, LossWeights weights);
  EpisodeObjective(Tensor support, std::vector<std::size_t> support_labels, Tensor query,
                   std::vector<std::size_t> query_labels, LossWeights weights);

  NodeId support_loss(ExprGraph& graph, const ParamNodes& w) const override;
  NodeId query_loss(ExprGraph& graph, const ParamNodes& w) const override;
  NodeId query_log_distribution(ExprGraph& graph, const ParamNodes& w) const override;

  const Tensor& support() const noexcept { return support_; }
  const Tensor& query() const noexcept { return query_; }

 private:
  NodeId part_loss(ExprGraph& graph, const ParamNodes& w, const Tensor& views, const std::vector<std::size_t>& labels,
                   bool contrastive) const;

  Tensor support_;
  std::vector<std::size_t> support_labels_;
  Tensor query_;
  std::vector<std::size_t> query_labels_;
  LossWeights weights_;
  bool support_contrastive_;
  bool query_contrastive_;
};

// l(w) = 0.5 * ||w - c||^2 on a single parameter "w"; support and query use
// their own centers. The query distribution is softmax(w) as one row.
class QuadraticObjective final : public InnerObjective {
 public:
  QuadraticObjective(Tensor support_center, Tensor query_center);

  NodeId support_loss(ExprGraph& graph, const ParamNodes& w) const override;
  NodeId query_loss(ExprGraph& graph, const ParamNodes& w) const override;
  NodeId query_log_distribution(ExprGraph& graph, const ParamNodes& w) const override;

  static ParamSet make_params(Tensor w);

 private:
  NodeId half_sq(ExprGraph& graph, NodeId w, const Tensor& center) const;
  Tensor support_center_;
  Tensor query_center_;
};

struct InnerTrajectory {
  std::vector<ParamSet> steps;         // w^0 = theta, ..., w^L
  std::vector<double> support_losses;  // loss at w^0 .. w^{L-1}
  ParamNodes final_nodes;              // w^L in the caller's graph
};

// L plain SGD steps on the support loss starting from `start` (nodes in
// `graph`). When differentiable, every step lives in `graph` so w^L is a
// differentiable function of `start`; otherwise the steps run detached and
// w^L is registered in `graph` as constants.
InnerTrajectory inner_adapt(ExprGraph& graph, const ParamNodes& start, const InnerObjective& task, std::size_t steps,
                            double alpha, bool differentiable);

// Detached SGD from plain values; returns w after `steps` steps.
ParamSet sgd_steps(const ParamSet& start, const InnerObjective& task, std::size_t steps, double alpha,
                   std::vector<double>* losses = nullptr);

// Objective driving the delta bootstrap steps past w^L.
enum class TargetObjective : std::uint8_t { Support, Query, Episode };

std::string_view target_objective_name(TargetObjective t);
TargetObjective parse_target_objective(std::string_view name);

struct BilevelConfig {
  std::size_t inner_steps = 5;  // L
  std::size_t delta = 5;        // bootstrap horizon
  double alpha = 0.05;          // inner learning rate
  double beta = 0.01;           // outer learning rate
  bool first_order = false;     // drop second-order terms through the inner loop
  TargetObjective target = TargetObjective::Support;
};

struct MetaGradient {
  ParamSet gradient;
  double outer_loss = 0.0;       // mean query loss (standard) or mean KL (bootstrapped)
  double query_loss = 0.0;       // mean query loss at w^L in both cases
  double mean_inner_loss = 0.0;  // mean support loss over tasks and steps
};

// Gradient w.r.t. theta of the mean query loss at w^L, averaged over tasks in
// the order given.
MetaGradient meta_gradient_standard(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                    const BilevelConfig& config);

// w^{L+delta}: delta more support-loss steps from w^L, detached.
ParamSet bootstrap_target(const ParamSet& theta, const InnerObjective& task, const BilevelConfig& config);

// mean over query rows of KL(pi_target || pi_student); target is constant.
NodeId kl_matching_loss(ExprGraph& graph, const InnerObjective& task, const ParamSet& target, const ParamNodes& student);

// Gradient w.r.t. theta of the mean KL matching loss; the student path goes
// through a differentiable inner loop, the target path is detached.
MetaGradient meta_gradient_bootstrapped(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                        const BilevelConfig& config);

struct MetaUpdateReport {
  double outer_loss = 0.0;  // query loss at w^L
  double kl_value = 0.0;    // bootstrapped steps only
  double grad_norm = 0.0;
  double mean_inner_loss = 0.0;
  ParamSet theta_before;
  ParamSet theta_after;
};

MetaUpdateReport meta_step_standard(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                    const BilevelConfig& config);
MetaUpdateReport meta_step_bootstrapped(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                        const BilevelConfig& config);

// Mean query loss at the detached L-step adapted weights.
double adapted_query_loss(const ParamSet& theta, std::span<const InnerObjective* const> tasks, std::size_t steps,
                          double alpha);

struct DescentProbeRow {
  double beta = 0.0;
  double change = 0.0;     // f(w^L(theta_boot)) - f(w^L(theta))
  double kl = 0.0;         // KL at theta
  double predicted = 0.0;  // -(beta / alpha) * KL
};

// One bootstrapped step per beta, each from the same theta.
std::vector<DescentProbeRow> descent_probe(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                           const BilevelConfig& config, std::span<const double> betas);

// Owning adaptor for building objectives from an episode batch.
std::vector<std::unique_ptr<InnerObjective>> episode_objectives(const EpisodeBatch& batch, LossWeights weights);
std::vector<const InnerObjective*> raw_pointers(const std::vector<std::unique_ptr<InnerObjective>>& owned);

}  // namespace bmssl
