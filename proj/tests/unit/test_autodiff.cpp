#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "bmssl/error.hpp"
#include "bmssl/finite_difference.hpp"
#include "bmssl/graph.hpp"
#include "bmssl/rng.hpp"

using namespace bmssl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Evaluate, SquareAtThree) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(3.0));
  EXPECT_EQ(g.value(g.mul(x, x)).item(), 9.0);
}

TEST(Evaluate, SoftmaxOfZerosIsUniform) {
  ExprGraph g;
  const NodeId s = g.softmax(g.constant(Tensor::vector({0.0, 0.0, 0.0})));
  for (double v : g.value(s).data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Evaluate, MeanOfOnes) {
  ExprGraph g;
  EXPECT_EQ(g.value(g.mean(g.constant(Tensor::filled({2, 2}, 1.0)))).item(), 1.0);
}

TEST(Evaluate, ShapeMismatchNamesTheNode) {
  ExprGraph g;
  const NodeId a = g.constant(Tensor({2, 3}));
  const NodeId b = g.constant(Tensor({3, 2}));
  try {
    g.add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
  EXPECT_THROW(g.matmul(a, a), ShapeError);
}

TEST(Evaluate, ReevaluateWithNewLeafValues) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(1.0));
  const NodeId y = g.mul(g.exp(x), x);
  g.evaluate({{"x", Tensor::scalar(2.0)}});
  EXPECT_DOUBLE_EQ(g.value(y).item(), 2.0 * std::exp(2.0));
  EXPECT_THROW(g.evaluate({{"nope", Tensor::scalar(0.0)}}), ValidationError);
  EXPECT_THROW(g.evaluate({{"x", Tensor::vector({1.0, 2.0})}}), ShapeError);
}

TEST(Evaluate, ParentsPrecedeChildren) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::vector({1.0, 2.0}));
  const NodeId y = g.sum(g.tanh(g.mul(x, x)));
  const std::string names[] = {"x"};
  g.backward(y, names);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (auto p : g.node(NodeId{i}).parents) EXPECT_LT(p.value, i);
}

TEST(Evaluate, DuplicateLeafRejected) {
  ExprGraph g;
  g.leaf("x", Tensor::scalar(1.0));
  EXPECT_THROW(g.leaf("x", Tensor::scalar(2.0)), ValidationError);
}

TEST(Backward, PowerRule) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(3.0));
  const std::string names[] = {"x"};
  EXPECT_EQ(g.gradient(g.mul(x, x), names).at("x").item(), 6.0);
}

TEST(Backward, SecondDerivativeOfCube) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(2.0));
  const NodeId y = g.mul(g.mul(x, x), x);
  const std::string names[] = {"x"};
  const NodeId dy = g.backward(y, names).at("x");
  EXPECT_DOUBLE_EQ(g.value(dy).item(), 12.0);
  EXPECT_DOUBLE_EQ(g.gradient(dy, names).at("x").item(), 12.0);
}

TEST(Backward, SecondOrderClosedForms) {
  const std::string names[] = {"x"};
  for (double x0 : {-1.3, -0.2, 0.4, 1.7}) {
    {
      ExprGraph g;
      const NodeId x = g.leaf("x", Tensor::scalar(x0));
      const NodeId d = g.backward(g.mul(g.mul(x, x), x), names).at("x");
      EXPECT_NEAR(g.gradient(d, names).at("x").item(), 6.0 * x0, 1e-8);
    }
    {
      ExprGraph g;
      const NodeId x = g.leaf("x", Tensor::scalar(x0));
      const NodeId d = g.backward(g.exp(x), names).at("x");
      EXPECT_NEAR(g.gradient(d, names).at("x").item(), std::exp(x0), 1e-8);
    }
    {
      ExprGraph g;
      const NodeId x = g.leaf("x", Tensor::scalar(x0));
      const NodeId one = g.constant(Tensor::scalar(1.0));
      const NodeId d = g.backward(g.log(g.add(one, g.mul(x, x))), names).at("x");
      const double q = 1.0 + x0 * x0;
      EXPECT_NEAR(g.gradient(d, names).at("x").item(), 2.0 * (1.0 - x0 * x0) / (q * q), 1e-8);
    }
  }
}

TEST(Backward, NonScalarOutputRejected) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::vector({1.0, 2.0}));
  const std::string names[] = {"x"};
  EXPECT_THROW(g.gradient(g.tanh(x), names), ShapeError);
}

TEST(Backward, UnknownLeafRejected) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(1.0));
  const std::string names[] = {"y"};
  EXPECT_THROW(g.gradient(g.mul(x, x), names), ValidationError);
}

TEST(Backward, UnreachedLeafHasZeroGradient) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(1.0));
  g.leaf("y", Tensor::vector({1.0, 2.0}));
  const std::string names[] = {"x", "y"};
  const auto grads = g.gradient(g.exp(x), names);
  EXPECT_EQ(grads.at("y").shape(), (Shape{2}));
  for (double v : grads.at("y").data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, AccumulationIsLinear) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor xv = random_tensor({3, 2}, rng);
    const Tensor cv = random_tensor({3, 2}, rng);
    const std::string names[] = {"x"};
    auto build_a = [&](ExprGraph& g, NodeId x) { return g.sum(g.tanh(g.mul(x, g.constant(cv)))); };
    auto build_b = [&](ExprGraph& g, NodeId x) { return g.mean(g.exp(x)); };
    ExprGraph ga, gb, gs;
    const Tensor da = ga.gradient(build_a(ga, ga.leaf("x", xv)), names).at("x");
    const Tensor db = gb.gradient(build_b(gb, gb.leaf("x", xv)), names).at("x");
    const NodeId xs = gs.leaf("x", xv);
    const Tensor ds = gs.gradient(gs.add(build_a(gs, xs), build_b(gs, xs)), names).at("x");
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds[i], da[i] + db[i]);
  }
}

TEST(Backward, DeterministicBitwise) {
  auto run = [] {
    Rng rng(11);
    ExprGraph g;
    const NodeId x = g.leaf("x", random_tensor({4, 5}, rng));
    const NodeId w = g.leaf("w", random_tensor({5, 3}, rng));
    const NodeId y = g.sum(g.log_softmax(g.matmul(g.tanh(x), w)));
    const std::string names[] = {"x", "w"};
    return g.gradient(y, names);
  };
  const auto a = run();
  const auto b = run();
  for (const auto& [name, t] : a) EXPECT_TRUE(bitwise_equal(t, b.at(name)));
}

TEST(Backward, BackwardValuesLeavesGraphSizeUnchanged) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::vector({0.5, -0.5}));
  const NodeId y = g.sum(g.softmax(x));
  const std::size_t before = g.size();
  const NodeId wrt[] = {x};
  g.backward_values(y, wrt);
  EXPECT_EQ(g.size(), before);
}

TEST(FiniteDifference, QuadraticIsNearlyExact) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(3.0));
  const NodeId y = g.mul(x, x);
  const FdReport r = finite_difference_check(g, y, {"x"}, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-9);
  EXPECT_EQ(r.coordinates, 1u);
}

TEST(FiniteDifference, RelativeErrorDenominator) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(1e-13, 0.0), 1e-13 / 1e-12);
}

TEST(FiniteDifference, FivePointBeatsTwoPointOnExp) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::scalar(1.2));
  const NodeId y = g.exp(g.mul(x, x));
  const FdReport two = finite_difference_check(g, y, {"x"}, 1e-3, FdStencil::TwoPoint);
  const FdReport five = finite_difference_check(g, y, {"x"}, 1e-3, FdStencil::FivePoint);
  EXPECT_LT(five.max_relative_error, two.max_relative_error / 100.0);
}

TEST(FiniteDifference, DetectsCorruptedGradient) {
  ExprGraph g;
  const NodeId x = g.leaf("x", Tensor::vector({0.3, -0.7}));
  const NodeId y = g.sum(g.tanh(x));
  const std::string names[] = {"x"};
  LeafValues grads = g.gradient(y, names);
  grads.at("x")[1] += 0.01;
  const FdReport r = compare_with_finite_differences(g, y, grads, 1e-5);
  EXPECT_GT(r.max_relative_error, 1e-3);
  EXPECT_EQ(r.worst_leaf, "x");
  EXPECT_EQ(r.worst_index, 1u);
}

// Random compositions of every differentiable op, checked against central
// differences. Relu/step inputs are kept away from their kinks.
class RandomGraphGradients : public ::testing::TestWithParam<int> {};

TEST_P(RandomGraphGradients, MatchFiniteDifferences) {
  Rng rng(derive_seed(0xF0, static_cast<std::uint64_t>(GetParam())));
  ExprGraph g;
  const NodeId a = g.leaf("a", random_tensor({3, 4}, rng));
  const NodeId b = g.leaf("b", random_tensor({4, 2}, rng));
  const NodeId c = g.leaf("c", random_tensor({3, 2}, rng, 0.5, 1.5));
  NodeId h = g.matmul(g.tanh(a), b);
  switch (rng.below(6)) {
    case 0: h = g.softmax(h); break;
    case 1: h = g.log_softmax(h); break;
    case 2: h = g.l2_normalize(g.add(h, g.constant(Tensor::filled({3, 2}, 2.0)))); break;
    case 3: h = g.mul(g.exp(g.scale(h, 0.5)), c); break;
    case 4: h = g.log(g.add(g.mul(h, h), c)); break;
    default: h = g.sub(h, c); break;
  }
  switch (rng.below(5)) {
    case 0: h = g.transpose(h); break;
    case 1: h = g.reshape(h, {2, 3}); break;
    case 2: {
      const NodeId parts[] = {h, c};
      h = g.concat(parts);
      break;
    }
    case 3: h = g.slice_rows(h, 1, 2); break;
    default: h = g.scatter_add(g.index_select(h, {0, 3, 3, 5}), {1, 1, 4, 0}, {2, 3}); break;
  }
  const NodeId weights = g.constant(random_tensor(g.value(h).shape(), rng));
  const NodeId out = g.add(g.sum(g.mul(h, weights)), g.mean(g.mul(c, c)));
  const FdReport r = finite_difference_check(g, out, {"a", "b", "c"}, 1e-4, FdStencil::FivePoint);
  EXPECT_LT(r.max_relative_error, 1e-6) << "worst " << r.worst_leaf << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomGraphGradients, ::testing::Range(0, 100));

TEST(OpNames, DistinctAndHyphenated) {
  std::set<std::string> names;
  for (int k = 0; k <= static_cast<int>(OpKind::ScatterAdd); ++k) {
    const std::string n(op_name(static_cast<OpKind>(k)));
    EXPECT_EQ(n.find('_'), std::string::npos);
    names.insert(n);
  }
  EXPECT_EQ(names.size(), static_cast<std::size_t>(OpKind::ScatterAdd) + 1);
}
