#include "bmssl/bilevel.hpp"

#include <cmath>

#include "bmssl/error.hpp"

namespace bmssl {

namespace {

std::vector<std::size_t> labels_of(const std::vector<LabeledView>& views) {
  std::vector<std::size_t> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.label);
  return out;
}

Tensor stack(const std::vector<LabeledView>& views) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(views.size());
  for (const auto& v : views) ptrs.push_back(&v.image);
  return views_tensor(ptrs);
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ValidationError("inner learning rate alpha must be finite and non-negative");
}

}  // namespace

EpisodeObjective::EpisodeObjective(const Episode& episode, LossWeights weights)
    : EpisodeObjective(stack(episode.support), labels_of(episode.support), stack(episode.query),
                       labels_of(episode.query), weights) {}

EpisodeObjective::EpisodeObjective(Tensor support, std::vector<std::size_t> support_labels, Tensor query,
                                   std::vector<std::size_t> query_labels, LossWeights weights)
    : support_(std::move(support)),
      support_labels_(std::move(support_labels)),
      query_(std::move(query)),
      query_labels_(std::move(query_labels)),
      weights_(weights),
      support_contrastive_(weights.lambda != 0.0 && has_positive_pairs(support_labels_)),
      query_contrastive_(weights.lambda != 0.0 && has_positive_pairs(query_labels_)) {
  if (support_.rows() != support_labels_.size() || query_.rows() != query_labels_.size()) {
    throw ShapeError("episode views and labels disagree in count");
  }
}

NodeId EpisodeObjective::part_loss(ExprGraph& graph, const ParamNodes& w, const Tensor& views,
                                   const std::vector<std::size_t>& labels, bool contrastive) const {
  LossWeights lw = weights_;
  if (!contrastive) lw.lambda = 0.0;
  return loss_total(graph, w, graph.constant(views), labels, lw);
}

NodeId EpisodeObjective::support_loss(ExprGraph& graph, const ParamNodes& w) const {
  return part_loss(graph, w, support_, support_labels_, support_contrastive_);
}

NodeId EpisodeObjective::query_loss(ExprGraph& graph, const ParamNodes& w) const {
  return part_loss(graph, w, query_, query_labels_, query_contrastive_);
}

NodeId EpisodeObjective::query_log_distribution(ExprGraph& graph, const ParamNodes& w) const {
  return log_predictive_distribution(graph, w, graph.constant(query_));
}

QuadraticObjective::QuadraticObjective(Tensor support_center, Tensor query_center)
    : support_center_(std::move(support_center)), query_center_(std::move(query_center)) {
  if (support_center_.shape() != query_center_.shape()) throw ShapeError("quadratic centers must share a shape");
}

ParamSet QuadraticObjective::make_params(Tensor w) {
  ParamSet p;
  p.insert("w", std::move(w));
  return p;
}

NodeId QuadraticObjective::half_sq(ExprGraph& graph, NodeId w, const Tensor& center) const {
  const NodeId d = graph.sub(w, graph.constant(center));
  return graph.scale(graph.sum(graph.mul(d, d)), 0.5);
}

NodeId QuadraticObjective::support_loss(ExprGraph& graph, const ParamNodes& w) const {
  return half_sq(graph, w.at("w"), support_center_);
}

NodeId QuadraticObjective::query_loss(ExprGraph& graph, const ParamNodes& w) const {
  return half_sq(graph, w.at("w"), query_center_);
}

NodeId QuadraticObjective::query_log_distribution(ExprGraph& graph, const ParamNodes& w) const {
  const NodeId id = w.at("w");
  return graph.log_softmax(graph.reshape(id, {1, graph.value(id).size()}));
}

InnerTrajectory inner_adapt(ExprGraph& graph, const ParamNodes& start, const InnerObjective& task, std::size_t steps,
                            double alpha, bool differentiable) {
  check_alpha(alpha);
  InnerTrajectory traj;
  traj.steps.push_back(read_values(graph, start));
  if (!differentiable) {
    std::vector<double> losses;
    ParamSet w = traj.steps.front();
    for (std::size_t k = 0; k < steps; ++k) {
      w = sgd_steps(w, task, 1, alpha, &losses);
      traj.steps.push_back(w);
    }
    traj.support_losses = std::move(losses);
    traj.final_nodes = steps == 0 ? start : register_constants(graph, traj.steps.back());
    return traj;
  }
  ParamNodes w = start;
  for (std::size_t k = 0; k < steps; ++k) {
    const NodeId loss = task.support_loss(graph, w);
    traj.support_losses.push_back(graph.value(loss).item());
    const auto grads = graph.backward_nodes(loss, w.ids);
    ParamNodes next;
    next.names = w.names;
    for (std::size_t i = 0; i < w.ids.size(); ++i) next.ids.push_back(graph.sub(w.ids[i], graph.scale(grads[i], alpha)));
    w = std::move(next);
    traj.steps.push_back(read_values(graph, w));
  }
  traj.final_nodes = w;
  return traj;
}

ParamSet sgd_steps(const ParamSet& start, const InnerObjective& task, std::size_t steps, double alpha,
                   std::vector<double>* losses) {
  check_alpha(alpha);
  ParamSet w = start;
  for (std::size_t k = 0; k < steps; ++k) {
    ExprGraph graph;
    const ParamNodes nodes = register_leaves(graph, w);
    const NodeId loss = task.support_loss(graph, nodes);
    if (losses) losses->push_back(graph.value(loss).item());
    const auto grads = graph.backward_values(loss, nodes.ids);
    ParamSet next;
    for (std::size_t i = 0; i < nodes.names.size(); ++i) {
      const Tensor& x = w.entries()[i].second;
      std::vector<double> data(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) data[j] = x[j] - grads[i][j] * alpha;
      next.insert(nodes.names[i], Tensor(x.shape(), std::move(data)));
    }
    w = std::move(next);
  }
  return w;
}

namespace {

void require_tasks(std::span<const InnerObjective* const> tasks) {
  if (tasks.empty()) throw ValidationError("meta step needs at least one task");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Shared driver: builds theta -> w^L per task, asks `outer` for the scalar to
// differentiate, and averages the theta-gradients in task order.
template <typename Outer>
MetaGradient meta_gradient(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                           const BilevelConfig& config, Outer outer) {
  require_tasks(tasks);
  MetaGradient result;
  result.gradient = zeros_like(theta);
  std::vector<double> inner_losses;
  double outer_sum = 0.0;
  double query_sum = 0.0;
  for (const InnerObjective* task : tasks) {
    ExprGraph graph;
    const ParamNodes theta_nodes = register_leaves(graph, theta);
    const bool exact = !config.first_order;
    InnerTrajectory traj = inner_adapt(graph, theta_nodes, *task, config.inner_steps, config.alpha, exact);
    inner_losses.insert(inner_losses.end(), traj.support_losses.begin(), traj.support_losses.end());
    const NodeId out = outer(graph, *task, traj);
    outer_sum += graph.value(out).item();
    query_sum += graph.value(task->query_loss(graph, traj.final_nodes)).item();
    const std::vector<NodeId>& wrt = exact ? theta_nodes.ids : traj.final_nodes.ids;
    const auto grads = graph.backward_values(out, wrt);
    ParamSet g;
    for (std::size_t i = 0; i < grads.size(); ++i) g.insert(theta_nodes.names[i], grads[i]);
    accumulate(result.gradient, g);
  }
  const double inv = 1.0 / static_cast<double>(tasks.size());
  result.gradient = scaled(result.gradient, inv);
  result.outer_loss = outer_sum * inv;
  result.query_loss = query_sum * inv;
  result.mean_inner_loss = mean_of(inner_losses);
  return result;
}

}  // namespace

MetaGradient meta_gradient_standard(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                    const BilevelConfig& config) {
  return meta_gradient(theta, tasks, config, [](ExprGraph& graph, const InnerObjective& task, const InnerTrajectory& traj) {
    return task.query_loss(graph, traj.final_nodes);
  });
}

std::string_view target_objective_name(TargetObjective t) {
  switch (t) {
    case TargetObjective::Support: return "support";
    case TargetObjective::Query: return "query";
    case TargetObjective::Episode: return "episode";
  }
  return "?";
}

TargetObjective parse_target_objective(std::string_view name) {
  for (auto t : {TargetObjective::Support, TargetObjective::Query, TargetObjective::Episode})
    if (target_objective_name(t) == name) return t;
  throw ValidationError("unknown target objective '" + std::string(name) + "' (expected support, query or episode)");
}

namespace {

// Presents the chosen target objective as the "support" loss so sgd_steps can
// run the bootstrap continuation unchanged.
class TargetSteps final : public InnerObjective {
 public:
  TargetSteps(const InnerObjective& task, TargetObjective kind) : task_(task), kind_(kind) {}
  NodeId support_loss(ExprGraph& graph, const ParamNodes& w) const override {
    switch (kind_) {
      case TargetObjective::Support: return task_.support_loss(graph, w);
      case TargetObjective::Query: return task_.query_loss(graph, w);
      case TargetObjective::Episode: break;
    }
    return graph.scale(graph.add(task_.support_loss(graph, w), task_.query_loss(graph, w)), 0.5);
  }
  NodeId query_loss(ExprGraph& graph, const ParamNodes& w) const override { return task_.query_loss(graph, w); }
  NodeId query_log_distribution(ExprGraph& graph, const ParamNodes& w) const override {
    return task_.query_log_distribution(graph, w);
  }

 private:
  const InnerObjective& task_;
  TargetObjective kind_;
};

ParamSet continue_target(const ParamSet& student, const InnerObjective& task, const BilevelConfig& config) {
  if (config.target == TargetObjective::Support) return sgd_steps(student, task, config.delta, config.alpha);
  return sgd_steps(student, TargetSteps(task, config.target), config.delta, config.alpha);
}

}  // namespace

ParamSet bootstrap_target(const ParamSet& theta, const InnerObjective& task, const BilevelConfig& config) {
  const ParamSet student = sgd_steps(theta, task, config.inner_steps, config.alpha);
  return continue_target(student, task, config);
}

NodeId kl_matching_loss(ExprGraph& graph, const InnerObjective& task, const ParamSet& target, const ParamNodes& student) {
  Tensor log_target;
  {
    ExprGraph scratch;
    const ParamNodes t = register_constants(scratch, target);
    log_target = scratch.value(task.query_log_distribution(scratch, t));
  }
  Tensor p_target = log_target;
  for (auto& v : p_target.data()) v = std::exp(v);

  const NodeId log_student = task.query_log_distribution(graph, student);
  if (graph.value(log_student).shape() != log_target.shape()) {
    throw ShapeError("kl_matching_loss: target distribution " + shape_to_string(log_target.shape()) +
                     " vs student " + shape_to_string(graph.value(log_student).shape()));
  }
  const std::size_t rows = log_target.rank() == 2 ? log_target.rows() : 1;
  const NodeId diff = graph.sub(graph.constant(std::move(log_target)), log_student);
  const NodeId weighted = graph.mul(graph.constant(std::move(p_target)), diff);
  return graph.scale(graph.sum(weighted), 1.0 / static_cast<double>(rows));
}

MetaGradient meta_gradient_bootstrapped(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                        const BilevelConfig& config) {
  return meta_gradient(theta, tasks, config,
                       [&config](ExprGraph& graph, const InnerObjective& task, const InnerTrajectory& traj) {
                         // Continuing from w^L gives the same weights as L + delta steps from theta.
                         const ParamSet target = continue_target(traj.steps.back(), task, config);
                         return kl_matching_loss(graph, task, target, traj.final_nodes);
                       });
}

namespace {

MetaUpdateReport apply_step(const ParamSet& theta, const MetaGradient& mg, const BilevelConfig& config, bool bootstrapped) {
  if (!(config.beta >= 0.0)) throw ValidationError("outer learning rate beta must be non-negative");
  MetaUpdateReport r;
  r.outer_loss = mg.query_loss;
  r.kl_value = bootstrapped ? mg.outer_loss : 0.0;
  r.grad_norm = l2_norm(mg.gradient);
  r.mean_inner_loss = mg.mean_inner_loss;
  r.theta_before = theta;
  r.theta_after = config.beta == 0.0 ? theta : axpy_sub(theta, mg.gradient, config.beta);
  return r;
}

}  // namespace

MetaUpdateReport meta_step_standard(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                    const BilevelConfig& config) {
  return apply_step(theta, meta_gradient_standard(theta, tasks, config), config, false);
}

MetaUpdateReport meta_step_bootstrapped(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                        const BilevelConfig& config) {
  return apply_step(theta, meta_gradient_bootstrapped(theta, tasks, config), config, true);
}

double adapted_query_loss(const ParamSet& theta, std::span<const InnerObjective* const> tasks, std::size_t steps,
                          double alpha) {
  require_tasks(tasks);
  double total = 0.0;
  for (const InnerObjective* task : tasks) {
    const ParamSet w = sgd_steps(theta, *task, steps, alpha);
    ExprGraph graph;
    const ParamNodes nodes = register_constants(graph, w);
    total += graph.value(task->query_loss(graph, nodes)).item();
  }
  return total / static_cast<double>(tasks.size());
}

std::vector<DescentProbeRow> descent_probe(const ParamSet& theta, std::span<const InnerObjective* const> tasks,
                                           const BilevelConfig& config, std::span<const double> betas) {
  for (double b : betas) {
    if (!(b > 0.0)) throw ValidationError("descent probe betas must be positive");
  }
  const MetaGradient mg = meta_gradient_bootstrapped(theta, tasks, config);
  const double before = adapted_query_loss(theta, tasks, config.inner_steps, config.alpha);
  std::vector<DescentProbeRow> rows;
  for (double beta : betas) {
    const ParamSet stepped = axpy_sub(theta, mg.gradient, beta);
    DescentProbeRow row;
    row.beta = beta;
    row.kl = mg.outer_loss;
    row.change = adapted_query_loss(stepped, tasks, config.inner_steps, config.alpha) - before;
    row.predicted = -(beta / config.alpha) * mg.outer_loss;
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::unique_ptr<InnerObjective>> episode_objectives(const EpisodeBatch& batch, LossWeights weights) {
  std::vector<std::unique_ptr<InnerObjective>> out;
  for (const auto& ep : batch.episodes) out.push_back(std::make_unique<EpisodeObjective>(ep, weights));
  return out;
}

std::vector<const InnerObjective*> raw_pointers(const std::vector<std::unique_ptr<InnerObjective>>& owned) {
  std::vector<const InnerObjective*> out;
  for (const auto& p : owned) out.push_back(p.get());
  return out;
}

}  // namespace bmssl
