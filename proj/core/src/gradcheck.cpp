#include "bmssl/gradcheck.hpp"

#include <memory>
#include <ostream>

#include "bmssl/bilevel.hpp"
#include "bmssl/error.hpp"
#include "bmssl/finite_difference.hpp"
#include "bmssl/model.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.2, 1] with random signs, keeping kinks out of reach.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

class Checker {
 public:
  explicit Checker(const GradcheckOptions& options) : options_(options) {}

  void compare(const std::string& name, ExprGraph& graph, NodeId output, LeafValues analytic) {
    if (options_.hook) options_.hook(name, analytic);
    const FdReport fd = compare_with_finite_differences(graph, output, analytic, options_.step, FdStencil::FivePoint);
    GradcheckEntry e;
    e.check = name;
    e.max_relative_error = fd.max_relative_error;
    e.coordinates = fd.coordinates;
    e.worst_leaf = fd.worst_leaf;
    e.worst_index = fd.worst_index;
    e.worst_analytic = fd.worst_analytic;
    e.worst_numeric = fd.worst_numeric;
    for (const auto& [leaf, g] : analytic) e.parameters += g.size();
    e.passed = fd.max_relative_error < options_.tolerance;
    report_.entries.push_back(std::move(e));
  }

  // Checks d/d(leaves) of sum(op_output * C) for a fixed random C.
  template <typename Build>
  void op(OpKind kind, Rng& rng, Build build) {
    ExprGraph graph;
    std::vector<std::string> leaves;
    const NodeId r = build(graph, leaves);
    const NodeId weights = graph.constant(random_tensor(graph.value(r).shape(), rng));
    const NodeId out = graph.sum(graph.mul(r, weights));
    compare("op:" + std::string(op_name(kind)), graph, out, graph.gradient(out, leaves));
  }

  GradcheckReport finish() {
    report_.tolerance = options_.tolerance;
    return std::move(report_);
  }

 private:
  const GradcheckOptions& options_;
  GradcheckReport report_;
};

LeafValues as_leaf_values(const ParamSet& p) {
  LeafValues out;
  for (const auto& [name, t] : p) out.emplace(name, t);
  return out;
}

void op_checks(Checker& c, Rng& rng) {
  auto leaf = [](ExprGraph& g, std::vector<std::string>& names, const std::string& name, Tensor v) {
    names.push_back(name);
    return g.leaf(name, std::move(v));
  };
  c.op(OpKind::Add, rng, [&](ExprGraph& g, auto& n) {
    const NodeId x = leaf(g, n, "x", random_tensor({3, 4}, rng));
    const NodeId y = leaf(g, n, "y", random_tensor({3, 4}, rng));
    const NodeId b = leaf(g, n, "b", random_tensor({4}, rng));
    return g.add(g.add(x, y), b);
  });
  c.op(OpKind::Sub, rng, [&](ExprGraph& g, auto& n) {
    return g.sub(leaf(g, n, "x", random_tensor({3, 4}, rng)), leaf(g, n, "y", random_tensor({3, 4}, rng)));
  });
  c.op(OpKind::Mul, rng, [&](ExprGraph& g, auto& n) {
    const NodeId x = leaf(g, n, "x", random_tensor({3, 4}, rng));
    const NodeId y = leaf(g, n, "y", random_tensor({3, 4}, rng));
    const NodeId s = leaf(g, n, "s", Tensor::scalar(rng.uniform(0.5, 1.5)));
    return g.mul(g.mul(x, y), s);
  });
  c.op(OpKind::MatMul, rng, [&](ExprGraph& g, auto& n) {
    return g.matmul(leaf(g, n, "x", random_tensor({3, 4}, rng)), leaf(g, n, "y", random_tensor({4, 2}, rng)));
  });
  c.op(OpKind::Transpose, rng, [&](ExprGraph& g, auto& n) { return g.transpose(leaf(g, n, "x", random_tensor({3, 4}, rng))); });
  c.op(OpKind::Reshape, rng, [&](ExprGraph& g, auto& n) { return g.reshape(leaf(g, n, "x", random_tensor({3, 4}, rng)), {2, 6}); });
  c.op(OpKind::Tanh, rng, [&](ExprGraph& g, auto& n) { return g.tanh(leaf(g, n, "x", random_tensor({3, 4}, rng, -2.0, 2.0))); });
  c.op(OpKind::Relu, rng, [&](ExprGraph& g, auto& n) { return g.relu(leaf(g, n, "x", away_from_zero({3, 4}, rng))); });
  c.op(OpKind::Step, rng, [&](ExprGraph& g, auto& n) { return g.step(leaf(g, n, "x", away_from_zero({3, 4}, rng))); });
  c.op(OpKind::Exp, rng, [&](ExprGraph& g, auto& n) { return g.exp(leaf(g, n, "x", random_tensor({3, 4}, rng))); });
  c.op(OpKind::Log, rng, [&](ExprGraph& g, auto& n) { return g.log(leaf(g, n, "x", random_tensor({3, 4}, rng, 0.5, 2.0))); });
  c.op(OpKind::Sum, rng, [&](ExprGraph& g, auto& n) { return g.sum(leaf(g, n, "x", random_tensor({3, 4}, rng))); });
  c.op(OpKind::Mean, rng, [&](ExprGraph& g, auto& n) { return g.mean(leaf(g, n, "x", random_tensor({3, 4}, rng))); });
  c.op(OpKind::Softmax, rng, [&](ExprGraph& g, auto& n) { return g.softmax(leaf(g, n, "x", random_tensor({3, 4}, rng, -2.0, 2.0))); });
  c.op(OpKind::LogSoftmax, rng,
       [&](ExprGraph& g, auto& n) { return g.log_softmax(leaf(g, n, "x", random_tensor({3, 4}, rng, -2.0, 2.0))); });
  c.op(OpKind::L2Normalize, rng,
       [&](ExprGraph& g, auto& n) { return g.l2_normalize(leaf(g, n, "x", away_from_zero({3, 4}, rng))); });
  c.op(OpKind::Scale, rng, [&](ExprGraph& g, auto& n) { return g.scale(leaf(g, n, "x", random_tensor({3, 4}, rng)), -1.7); });
  c.op(OpKind::Concat, rng, [&](ExprGraph& g, auto& n) {
    const NodeId parts[] = {leaf(g, n, "x", random_tensor({2, 3}, rng)), leaf(g, n, "y", random_tensor({3, 3}, rng))};
    return g.concat(parts);
  });
  c.op(OpKind::SliceRows, rng, [&](ExprGraph& g, auto& n) { return g.slice_rows(leaf(g, n, "x", random_tensor({4, 3}, rng)), 1, 2); });
  c.op(OpKind::IndexSelect, rng,
       [&](ExprGraph& g, auto& n) { return g.index_select(leaf(g, n, "x", random_tensor({3, 4}, rng)), {0, 5, 5, 11, 2}); });
  c.op(OpKind::ScatterAdd, rng,
       [&](ExprGraph& g, auto& n) { return g.scatter_add(leaf(g, n, "x", random_tensor({5}, rng)), {1, 7, 7, 0, 11}, {3, 4}); });
}

struct Instance {
  ModelDims dims;
  ParamSet theta;
  std::unique_ptr<EpisodeObjective> task;
  BilevelConfig config;
};

// Two-way, two views per class on both sides, random pixel rows.
Instance make_instance(GradcheckScale scale, Rng& rng, std::uint64_t seed) {
  Instance in;
  if (scale == GradcheckScale::Tiny) {
    in.dims = {8, 6, 3, 2};
    in.config.inner_steps = 2;
    in.config.delta = 2;
  } else {
    in.dims = {12, 8, 4, 2};
    in.config.inner_steps = 3;
    in.config.delta = 3;
  }
  in.config.alpha = 0.1;
  in.theta = init_params(in.dims, seed);
  for (const auto& name : {kExtractorB1, kExtractorB2, kProjectionB, kClassifierB})
    for (auto& v : in.theta.at(name).data()) v = rng.uniform(-0.3, 0.3);
  const std::vector<std::size_t> labels = {0, 0, 1, 1};
  in.task = std::make_unique<EpisodeObjective>(random_tensor({4, in.dims.input}, rng, 0.0, 1.0), labels,
                                               random_tensor({4, in.dims.input}, rng, 0.0, 1.0), labels, LossWeights{});
  return in;
}

}  // namespace

GradcheckScale parse_gradcheck_scale(std::string_view name) {
  if (name == "tiny") return GradcheckScale::Tiny;
  if (name == "small") return GradcheckScale::Small;
  throw ValidationError("unknown gradcheck scale '" + std::string(name) + "' (expected tiny or small)");
}

bool GradcheckReport::all_passed() const {
  for (const auto& e : entries)
    if (!e.passed) return false;
  return !entries.empty();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  Checker checker(options);
  Rng rng(derive_seed(options.seed, 0x6C4E));
  op_checks(checker, rng);

  Instance in = make_instance(options.scale, rng, derive_seed(options.seed, 0x7E7A));
  {
    ExprGraph graph;
    const ParamNodes nodes = register_leaves(graph, in.theta);
    const NodeId loss = in.task->support_loss(graph, nodes);
    checker.compare("loss:total", graph, loss, graph.gradient(loss, nodes.names));
  }
  const InnerObjective* tasks[] = {in.task.get()};
  {
    const MetaGradient mg = meta_gradient_standard(in.theta, tasks, in.config);
    ExprGraph graph;
    const ParamNodes nodes = register_leaves(graph, in.theta);
    const InnerTrajectory traj = inner_adapt(graph, nodes, *in.task, in.config.inner_steps, in.config.alpha, true);
    const NodeId out = in.task->query_loss(graph, traj.final_nodes);
    checker.compare("meta:standard", graph, out, as_leaf_values(mg.gradient));
  }
  {
    const MetaGradient mg = meta_gradient_bootstrapped(in.theta, tasks, in.config);
    const ParamSet target = bootstrap_target(in.theta, *in.task, in.config);
    ExprGraph graph;
    const ParamNodes nodes = register_leaves(graph, in.theta);
    const InnerTrajectory traj = inner_adapt(graph, nodes, *in.task, in.config.inner_steps, in.config.alpha, true);
    const NodeId out = kl_matching_loss(graph, *in.task, target, traj.final_nodes);
    checker.compare("meta:bootstrapped", graph, out, as_leaf_values(mg.gradient));
  }
  return checker.finish();
}

void write_gradcheck_csv(std::ostream& out, const GradcheckReport& report) {
  out << "check,max_relative_error,coordinates,status\n";
  for (const auto& e : report.entries) {
    out << e.check << ',' << e.max_relative_error << ',' << e.coordinates << ',' << (e.passed ? "pass" : "FAIL") << '\n';
  }
}

}  // namespace bmssl
