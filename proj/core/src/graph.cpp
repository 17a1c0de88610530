#include "bmssl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bmssl/error.hpp"

namespace bmssl {

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Step: return "step";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log-softmax";
    case OpKind::L2Normalize: return "l2-normalize";
    case OpKind::Scale: return "scale";
    case OpKind::Concat: return "concat";
    case OpKind::SliceRows: return "slice-rows";
    case OpKind::IndexSelect: return "index-select";
    case OpKind::ScatterAdd: return "scatter-add";
  }
  return "unknown";
}

namespace {

// Added to the squared row norm in l2_normalize so an all-zero row maps to zero.
constexpr double kNormEpsSq = 1e-24;

[[noreturn]] void shape_fail(const Node& n, const std::string& detail) {
  throw ShapeError("node " + std::to_string(n.id.value) + " (" + std::string(op_name(n.op)) + "): " + detail);
}

std::string describe(const Shape& expected, const Shape& actual) {
  return "expected " + shape_to_string(expected) + ", got " + shape_to_string(actual);
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

// Views a rank-1 or rank-2 tensor as rows x cols for row-wise ops.
std::pair<std::size_t, std::size_t> row_view(const Node& n, const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  shape_fail(n, "row-wise op needs rank 1 or 2, got " + shape_to_string(t.shape()));
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return Tensor::unchecked(a.shape(), std::move(out));
}

}  // namespace

NodeId ExprGraph::push(Node node) {
  node.id = NodeId{nodes_.size()};
  for (auto p : node.parents) {
    if (p.value >= nodes_.size()) throw ValidationError("parent id " + std::to_string(p.value) + " does not exist");
  }
  if (node.op != OpKind::Leaf && node.op != OpKind::Constant) {
    node.value = compute(node);
    bool rg = false;
    if (node.op != OpKind::Step) {
      for (auto p : node.parents) rg = rg || nodes_[p.value].requires_grad;
    }
    node.requires_grad = rg;
  }
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

Tensor ExprGraph::compute(const Node& n) const {
  auto val = [&](std::size_t i) -> const Tensor& { return nodes_[n.parents[i].value].value; };
  Tensor out;
  switch (n.op) {
    case OpKind::Leaf:
    case OpKind::Constant:
      return n.value;
    case OpKind::Add: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.shape() == b.shape()) {
        std::vector<double> o(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] + b[i];
        out = Tensor::unchecked(a.shape(), std::move(o));
      } else if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.shape()[1]) {
        const std::size_t r = a.shape()[0], c = a.shape()[1];
        std::vector<double> o(a.size());
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) o[i * c + j] = a[i * c + j] + b[j];
        out = Tensor::unchecked(a.shape(), std::move(o));
      } else {
        shape_fail(n, "cannot add " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
      }
      break;
    }
    case OpKind::Sub: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.shape() != b.shape()) shape_fail(n, describe(a.shape(), b.shape()));
      std::vector<double> o(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] - b[i];
      out = Tensor::unchecked(a.shape(), std::move(o));
      break;
    }
    case OpKind::Mul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.shape() == b.shape()) {
        std::vector<double> o(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] * b[i];
        out = Tensor::unchecked(a.shape(), std::move(o));
      } else if (is_scalar(a)) {
        const double s = a[0];
        out = map_unary(b, [s](double v) { return s * v; });
      } else if (is_scalar(b)) {
        const double s = b[0];
        out = map_unary(a, [s](double v) { return v * s; });
      } else {
        shape_fail(n, "cannot multiply " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
      }
      break;
    }
    case OpKind::MatMul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        shape_fail(n, "cannot matmul " + shape_to_string(a.shape()) + " by " + shape_to_string(b.shape()));
      }
      const std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
      std::vector<double> o(m * p, 0.0);
      const double* ad = a.data().data();
      const double* bd = b.data().data();
      // i-k-j order: each output element accumulates over k in increasing order.
      for (std::size_t i = 0; i < m; ++i) {
        double* orow = o.data() + i * p;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = ad[i * k + kk];
          if (aik == 0.0) continue;
          const double* brow = bd + kk * p;
          for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
      }
      out = Tensor::unchecked({m, p}, std::move(o));
      break;
    }
    case OpKind::Transpose: {
      const Tensor& a = val(0);
      if (a.rank() != 2) shape_fail(n, "transpose needs rank 2, got " + shape_to_string(a.shape()));
      const std::size_t r = a.shape()[0], c = a.shape()[1];
      std::vector<double> o(a.size());
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) o[j * r + i] = a[i * c + j];
      out = Tensor::unchecked({c, r}, std::move(o));
      break;
    }
    case OpKind::Reshape: {
      const Tensor& a = val(0);
      if (shape_numel(n.target_shape) != a.size()) shape_fail(n, "cannot reshape " + describe(n.target_shape, a.shape()));
      out = Tensor::unchecked(n.target_shape, a.storage());
      break;
    }
    case OpKind::Tanh:
      out = map_unary(val(0), [](double v) { return std::tanh(v); });
      break;
    case OpKind::Relu:
      out = map_unary(val(0), [](double v) { return v > 0.0 ? v : 0.0; });
      break;
    case OpKind::Step:
      out = map_unary(val(0), [](double v) { return v > 0.0 ? 1.0 : 0.0; });
      break;
    case OpKind::Exp:
      out = map_unary(val(0), [](double v) { return std::exp(v); });
      break;
    case OpKind::Log:
      out = map_unary(val(0), [](double v) { return std::log(v); });
      break;
    case OpKind::Sum:
    case OpKind::Mean: {
      const Tensor& a = val(0);
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
      if (n.op == OpKind::Mean) s /= static_cast<double>(a.size());
      out = Tensor::unchecked({}, {s});
      break;
    }
    case OpKind::Softmax:
    case OpKind::LogSoftmax: {
      const Tensor& a = val(0);
      const auto [r, c] = row_view(n, a);
      std::vector<double> o(a.size());
      for (std::size_t i = 0; i < r; ++i) {
        const double* row = a.data().data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        if (n.op == OpKind::Softmax) {
          for (std::size_t j = 0; j < c; ++j) o[i * c + j] = std::exp(row[j] - mx) / z;
        } else {
          const double lz = std::log(z);
          for (std::size_t j = 0; j < c; ++j) o[i * c + j] = (row[j] - mx) - lz;
        }
      }
      out = Tensor::unchecked(a.shape(), std::move(o));
      break;
    }
    case OpKind::L2Normalize: {
      const Tensor& a = val(0);
      const auto [r, c] = row_view(n, a);
      std::vector<double> o(a.size());
      for (std::size_t i = 0; i < r; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < c; ++j) ss += a[i * c + j] * a[i * c + j];
        const double inv = 1.0 / std::sqrt(ss + kNormEpsSq);
        for (std::size_t j = 0; j < c; ++j) o[i * c + j] = a[i * c + j] * inv;
      }
      out = Tensor::unchecked(a.shape(), std::move(o));
      break;
    }
    case OpKind::Scale: {
      const double f = n.factor;
      out = map_unary(val(0), [f](double v) { return v * f; });
      break;
    }
    case OpKind::Concat: {
      std::size_t rows = 0;
      std::size_t cols = 0;
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        const Tensor& p = val(i);
        if (p.rank() != 2) shape_fail(n, "concat needs rank-2 parts, got " + shape_to_string(p.shape()));
        if (i == 0) cols = p.shape()[1];
        if (p.shape()[1] != cols) shape_fail(n, "concat column mismatch: " + describe({p.shape()[0], cols}, p.shape()));
        rows += p.shape()[0];
      }
      std::vector<double> o;
      o.reserve(rows * cols);
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        const auto d = val(i).data();
        o.insert(o.end(), d.begin(), d.end());
      }
      out = Tensor::unchecked({rows, cols}, std::move(o));
      break;
    }
    case OpKind::SliceRows: {
      const Tensor& a = val(0);
      if (a.rank() != 2 || n.count == 0 || n.offset + n.count > a.shape()[0]) {
        shape_fail(n, "row slice [" + std::to_string(n.offset) + ", +" + std::to_string(n.count) + ") out of range for " +
                          shape_to_string(a.shape()));
      }
      const std::size_t c = a.shape()[1];
      const auto d = a.data();
      std::vector<double> o(d.begin() + static_cast<std::ptrdiff_t>(n.offset * c),
                            d.begin() + static_cast<std::ptrdiff_t>((n.offset + n.count) * c));
      out = Tensor::unchecked({n.count, c}, std::move(o));
      break;
    }
    case OpKind::IndexSelect: {
      const Tensor& a = val(0);
      if (n.indices.empty()) shape_fail(n, "empty index list");
      std::vector<double> o(n.indices.size());
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        if (n.indices[i] >= a.size()) shape_fail(n, "index " + std::to_string(n.indices[i]) + " out of range for " + shape_to_string(a.shape()));
        o[i] = a[n.indices[i]];
      }
      out = Tensor::unchecked({n.indices.size()}, std::move(o));
      break;
    }
    case OpKind::ScatterAdd: {
      const Tensor& a = val(0);
      if (a.rank() != 1 || a.size() != n.indices.size()) {
        shape_fail(n, describe({n.indices.size()}, a.shape()));
      }
      std::vector<double> o(shape_numel(n.target_shape), 0.0);
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        if (n.indices[i] >= o.size()) shape_fail(n, "index out of range for " + shape_to_string(n.target_shape));
        o[n.indices[i]] += a[i];
      }
      out = Tensor::unchecked(n.target_shape, std::move(o));
      break;
    }
  }
  if (!out.all_finite()) {
    throw NumericError("node " + std::to_string(n.id.value) + " (" + std::string(op_name(n.op)) +
                       ") produced a non-finite value");
  }
  return out;
}

NodeId ExprGraph::leaf(std::string name, Tensor value) {
  if (leaves_.contains(name)) throw ValidationError("duplicate leaf name '" + name + "'");
  Node n;
  n.op = OpKind::Leaf;
  n.name = name;
  n.value = std::move(value);
  n.requires_grad = true;
  const NodeId id = push(std::move(n));
  leaves_.emplace(std::move(name), id);
  return id;
}

NodeId ExprGraph::constant(Tensor value) {
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {

Node make(OpKind op, std::initializer_list<NodeId> parents) {
  Node n;
  n.op = op;
  n.parents = parents;
  return n;
}

}  // namespace

NodeId ExprGraph::add(NodeId a, NodeId b) { return push(make(OpKind::Add, {a, b})); }
NodeId ExprGraph::sub(NodeId a, NodeId b) { return push(make(OpKind::Sub, {a, b})); }
NodeId ExprGraph::mul(NodeId a, NodeId b) { return push(make(OpKind::Mul, {a, b})); }
NodeId ExprGraph::matmul(NodeId a, NodeId b) { return push(make(OpKind::MatMul, {a, b})); }
NodeId ExprGraph::transpose(NodeId a) { return push(make(OpKind::Transpose, {a})); }
NodeId ExprGraph::tanh(NodeId a) { return push(make(OpKind::Tanh, {a})); }
NodeId ExprGraph::relu(NodeId a) { return push(make(OpKind::Relu, {a})); }
NodeId ExprGraph::step(NodeId a) { return push(make(OpKind::Step, {a})); }
NodeId ExprGraph::exp(NodeId a) { return push(make(OpKind::Exp, {a})); }
NodeId ExprGraph::log(NodeId a) { return push(make(OpKind::Log, {a})); }
NodeId ExprGraph::sum(NodeId a) { return push(make(OpKind::Sum, {a})); }
NodeId ExprGraph::mean(NodeId a) { return push(make(OpKind::Mean, {a})); }
NodeId ExprGraph::softmax(NodeId a) { return push(make(OpKind::Softmax, {a})); }
NodeId ExprGraph::log_softmax(NodeId a) { return push(make(OpKind::LogSoftmax, {a})); }
NodeId ExprGraph::l2_normalize(NodeId a) { return push(make(OpKind::L2Normalize, {a})); }

NodeId ExprGraph::reshape(NodeId a, Shape shape) {
  Node n = make(OpKind::Reshape, {a});
  n.target_shape = std::move(shape);
  return push(std::move(n));
}

NodeId ExprGraph::scale(NodeId a, double factor) {
  Node n = make(OpKind::Scale, {a});
  n.factor = factor;
  return push(std::move(n));
}

NodeId ExprGraph::concat(std::span<const NodeId> parts) {
  if (parts.empty()) throw ValidationError("concat needs at least one part");
  Node n;
  n.op = OpKind::Concat;
  n.parents.assign(parts.begin(), parts.end());
  return push(std::move(n));
}

NodeId ExprGraph::slice_rows(NodeId a, std::size_t start, std::size_t count) {
  Node n = make(OpKind::SliceRows, {a});
  n.offset = start;
  n.count = count;
  return push(std::move(n));
}

NodeId ExprGraph::index_select(NodeId a, std::vector<std::size_t> flat_indices) {
  Node n = make(OpKind::IndexSelect, {a});
  n.indices = std::move(flat_indices);
  return push(std::move(n));
}

NodeId ExprGraph::scatter_add(NodeId a, std::vector<std::size_t> flat_indices, Shape shape) {
  Node n = make(OpKind::ScatterAdd, {a});
  n.indices = std::move(flat_indices);
  n.target_shape = std::move(shape);
  return push(std::move(n));
}

std::optional<NodeId> ExprGraph::find_leaf(std::string_view name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ExprGraph::leaf_names() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaves_) names.push_back(name);
  return names;
}

void ExprGraph::evaluate(const LeafValues& leaf_values) {
  for (const auto& [name, value] : leaf_values) {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) throw ValidationError("unknown leaf '" + name + "'");
    Node& n = nodes_[it->second.value];
    if (n.value.shape() != value.shape()) {
      throw ShapeError("leaf '" + name + "': " + describe(n.value.shape(), value.shape()));
    }
    n.value = value;
  }
  for (auto& n : nodes_) {
    if (n.op == OpKind::Leaf || n.op == OpKind::Constant) continue;
    n.value = compute(n);
  }
}

void ExprGraph::truncate(std::size_t n) {
  if (n >= nodes_.size()) return;
  nodes_.resize(n);
  std::erase_if(leaves_, [n](const auto& kv) { return kv.second.value >= n; });
}

NodeId ExprGraph::ones_like(const Shape& shape) { return constant(Tensor::filled(shape, 1.0)); }

NodeId ExprGraph::zeros(const Shape& shape) { return constant(Tensor(shape)); }

NodeId ExprGraph::rowsum_broadcast(NodeId a) {
  const Shape shape = value(a).shape();
  if (shape.size() == 1) {
    const std::size_t c = shape[0];
    const NodeId row = reshape(a, {1, c});
    return reshape(matmul(row, ones_like({c, c})), {c});
  }
  const std::size_t c = shape.at(1);
  return matmul(a, ones_like({c, c}));
}

void ExprGraph::accumulate(std::vector<std::optional<NodeId>>& adjoints, NodeId target, NodeId contribution) {
  auto& slot = adjoints[target.value];
  slot = slot ? add(*slot, contribution) : contribution;
}

void ExprGraph::vjp(NodeId id, NodeId g, std::vector<std::optional<NodeId>>& adjoints, const std::vector<char>& active) {
  // Copy what we need: push() may reallocate nodes_.
  const OpKind op = nodes_[id.value].op;
  const std::vector<NodeId> parents = nodes_[id.value].parents;
  auto live = [&](std::size_t i) { return i < parents.size() && active[parents[i].value]; };
  auto shape_of = [&](NodeId n) { return nodes_[n.value].value.shape(); };

  switch (op) {
    case OpKind::Leaf:
    case OpKind::Constant:
    case OpKind::Step:
      return;
    case OpKind::Add: {
      const Shape sa = shape_of(parents[0]);
      const Shape sb = shape_of(parents[1]);
      if (live(0)) accumulate(adjoints, parents[0], g);
      if (live(1)) {
        if (sa == sb) {
          accumulate(adjoints, parents[1], g);
        } else {
          const NodeId colsum = matmul(ones_like({1, sa[0]}), g);
          accumulate(adjoints, parents[1], reshape(colsum, sb));
        }
      }
      return;
    }
    case OpKind::Sub:
      if (live(0)) accumulate(adjoints, parents[0], g);
      if (live(1)) accumulate(adjoints, parents[1], scale(g, -1.0));
      return;
    case OpKind::Mul: {
      const NodeId a = parents[0];
      const NodeId b = parents[1];
      const Shape sa = shape_of(a);
      const Shape sb = shape_of(b);
      if (sa == sb) {
        if (live(0)) accumulate(adjoints, a, mul(g, b));
        if (live(1)) accumulate(adjoints, b, mul(g, a));
      } else if (sa.empty()) {
        if (live(0)) accumulate(adjoints, a, sum(mul(g, b)));
        if (live(1)) accumulate(adjoints, b, mul(a, g));
      } else {
        if (live(0)) accumulate(adjoints, a, mul(g, b));
        if (live(1)) accumulate(adjoints, b, sum(mul(g, a)));
      }
      return;
    }
    case OpKind::MatMul:
      if (live(0)) accumulate(adjoints, parents[0], matmul(g, transpose(parents[1])));
      if (live(1)) accumulate(adjoints, parents[1], matmul(transpose(parents[0]), g));
      return;
    case OpKind::Transpose:
      if (live(0)) accumulate(adjoints, parents[0], transpose(g));
      return;
    case OpKind::Reshape:
      if (live(0)) accumulate(adjoints, parents[0], reshape(g, shape_of(parents[0])));
      return;
    case OpKind::Tanh:
      // g * (1 - y^2)
      if (live(0)) accumulate(adjoints, parents[0], sub(g, mul(mul(g, id), id)));
      return;
    case OpKind::Relu:
      if (live(0)) accumulate(adjoints, parents[0], mul(g, step(parents[0])));
      return;
    case OpKind::Exp:
      if (live(0)) accumulate(adjoints, parents[0], mul(g, id));
      return;
    case OpKind::Log:
      // 1/x written as exp(-log x) so it stays differentiable through this node.
      if (live(0)) accumulate(adjoints, parents[0], mul(g, exp(scale(id, -1.0))));
      return;
    case OpKind::Sum:
      if (live(0)) accumulate(adjoints, parents[0], mul(g, ones_like(shape_of(parents[0]))));
      return;
    case OpKind::Mean: {
      if (!live(0)) return;
      const Shape sa = shape_of(parents[0]);
      const double inv = 1.0 / static_cast<double>(shape_numel(sa));
      accumulate(adjoints, parents[0], mul(scale(g, inv), ones_like(sa)));
      return;
    }
    case OpKind::Softmax:
      // y * (g - rowsum(g*y))
      if (live(0)) accumulate(adjoints, parents[0], mul(id, sub(g, rowsum_broadcast(mul(g, id)))));
      return;
    case OpKind::LogSoftmax:
      // g - softmax(x) * rowsum(g), with softmax(x) = exp(y)
      if (live(0)) accumulate(adjoints, parents[0], sub(g, mul(exp(id), rowsum_broadcast(g))));
      return;
    case OpKind::L2Normalize: {
      if (!live(0)) return;
      // (g - y * rowsum(g*y)) / sqrt(rowsum(x*x) + eps^2)
      const NodeId x = parents[0];
      const NodeId tangent = sub(g, mul(id, rowsum_broadcast(mul(g, id))));
      const NodeId sq = rowsum_broadcast(mul(x, x));
      const NodeId eps = constant(Tensor::filled(shape_of(x), kNormEpsSq));
      const NodeId inv_norm = exp(scale(log(add(sq, eps)), -0.5));
      accumulate(adjoints, x, mul(tangent, inv_norm));
      return;
    }
    case OpKind::Scale:
      if (live(0)) accumulate(adjoints, parents[0], scale(g, nodes_[id.value].factor));
      return;
    case OpKind::Concat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        const std::size_t rows = shape_of(parents[i])[0];
        if (live(i)) accumulate(adjoints, parents[i], slice_rows(g, offset, rows));
        offset += rows;
      }
      return;
    }
    case OpKind::SliceRows: {
      if (!live(0)) return;
      const Shape sa = shape_of(parents[0]);
      const std::size_t start = nodes_[id.value].offset;
      const std::size_t count = nodes_[id.value].count;
      const std::size_t tail = sa[0] - start - count;
      std::vector<NodeId> parts;
      if (start > 0) parts.push_back(zeros({start, sa[1]}));
      parts.push_back(g);
      if (tail > 0) parts.push_back(zeros({tail, sa[1]}));
      accumulate(adjoints, parents[0], parts.size() == 1 ? g : concat(parts));
      return;
    }
    case OpKind::IndexSelect: {
      if (!live(0)) return;
      std::vector<std::size_t> idx = nodes_[id.value].indices;
      accumulate(adjoints, parents[0], scatter_add(g, std::move(idx), shape_of(parents[0])));
      return;
    }
    case OpKind::ScatterAdd: {
      if (!live(0)) return;
      std::vector<std::size_t> idx = nodes_[id.value].indices;
      accumulate(adjoints, parents[0], index_select(g, std::move(idx)));
      return;
    }
  }
}

std::vector<NodeId> ExprGraph::backward_nodes(NodeId output, std::span<const NodeId> wrt) {
  if (output.value >= nodes_.size()) throw ValidationError("backward: output node does not exist");
  if (value(output).size() != 1) {
    throw ShapeError("backward: output node " + std::to_string(output.value) + " must be scalar, got " +
                     shape_to_string(value(output).shape()));
  }
  const std::size_t last = output.value;

  std::vector<char> reaches(last + 1, 0);
  reaches[last] = 1;
  for (std::size_t i = last + 1; i-- > 0;) {
    if (!reaches[i]) continue;
    for (auto p : nodes_[i].parents) reaches[p.value] = 1;
  }

  std::vector<char> from_wrt(last + 1, 0);
  for (auto w : wrt) {
    if (w.value >= nodes_.size()) throw ValidationError("backward: wrt node does not exist");
    if (w.value <= last) from_wrt[w.value] = 1;
  }
  for (std::size_t i = 0; i <= last; ++i) {
    if (from_wrt[i] || nodes_[i].op == OpKind::Step) continue;
    for (auto p : nodes_[i].parents) {
      if (from_wrt[p.value]) {
        from_wrt[i] = 1;
        break;
      }
    }
  }

  std::vector<char> active(last + 1, 0);
  for (std::size_t i = 0; i <= last; ++i) active[i] = reaches[i] && from_wrt[i];

  std::vector<std::optional<NodeId>> adjoints(last + 1);
  if (active[last]) adjoints[last] = constant(Tensor::filled(value(output).shape(), 1.0));
  for (std::size_t i = last + 1; i-- > 0;) {
    if (!active[i] || !adjoints[i]) continue;
    vjp(NodeId{i}, *adjoints[i], adjoints, active);
  }

  std::vector<NodeId> result;
  result.reserve(wrt.size());
  for (auto w : wrt) {
    if (w.value <= last && adjoints[w.value]) {
      result.push_back(*adjoints[w.value]);
    } else {
      result.push_back(zeros(value(w).shape()));
    }
  }
  return result;
}

std::vector<Tensor> ExprGraph::backward_values(NodeId output, std::span<const NodeId> wrt) {
  const std::size_t before = nodes_.size();
  const auto ids = backward_nodes(output, wrt);
  std::vector<Tensor> values;
  values.reserve(ids.size());
  for (auto id : ids) values.push_back(value(id));
  truncate(before);
  return values;
}

namespace {

std::vector<NodeId> resolve(const ExprGraph& g, std::span<const std::string> names) {
  std::vector<NodeId> ids;
  for (const auto& name : names) {
    auto id = g.find_leaf(name);
    if (!id) throw ValidationError("backward: unknown leaf '" + name + "'");
    ids.push_back(*id);
  }
  return ids;
}

}  // namespace

std::map<std::string, NodeId> ExprGraph::backward(NodeId output, std::span<const std::string> wrt) {
  const auto ids = backward_nodes(output, resolve(*this, wrt));
  std::map<std::string, NodeId> out;
  for (std::size_t i = 0; i < wrt.size(); ++i) out.emplace(wrt[i], ids[i]);
  return out;
}

LeafValues ExprGraph::gradient(NodeId output, std::span<const std::string> wrt) {
  const auto values = backward_values(output, resolve(*this, wrt));
  LeafValues out;
  for (std::size_t i = 0; i < wrt.size(); ++i) out.emplace(wrt[i], values[i]);
  return out;
}

}  // namespace bmssl
