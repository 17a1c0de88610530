#pragma once

// Reverse-mode differentiation over dense tensors.
//
// Nodes are evaluated eagerly as they are appended, and can be re-evaluated
// in bulk with new leaf values. Every vector-Jacobian rule is itself written
// in terms of graph ops, so backward() with create_graph set produces
// adjoints that can be differentiated again (gradients of gradients).
//
// Broadcasting is limited to scalar*tensor in mul() and row-bias addition
// ([r,c] + [c]) in add(). Everything else must match exactly.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmssl/tensor.hpp"

namespace bmssl {

struct NodeId {
  std::size_t value = 0;
  friend bool operator==(NodeId, NodeId) = default;
  friend auto operator<=>(NodeId, NodeId) = default;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  MatMul,
  Transpose,
  Reshape,
  Tanh,
  Relu,
  Step,
  Exp,
  Log,
  Sum,
  Mean,
  Softmax,
  LogSoftmax,
  L2Normalize,
  Scale,
  Concat,
  SliceRows,
  IndexSelect,
  ScatterAdd,
};

std::string_view op_name(OpKind op);

struct Node {
  NodeId id;
  OpKind op = OpKind::Constant;
  std::vector<NodeId> parents;
  Tensor value;
  bool requires_grad = false;
  std::string name;                   // leaves only
  double factor = 0.0;                // Scale
  std::size_t offset = 0;             // SliceRows start
  std::size_t count = 0;              // SliceRows length
  std::vector<std::size_t> indices;   // IndexSelect / ScatterAdd flat indices
  Shape target_shape;                 // Reshape / ScatterAdd output shape
};

using LeafValues = std::map<std::string, Tensor, std::less<>>;

class ExprGraph {
 public:
  // Differentiable named input. Names must be unique within a graph.
  NodeId leaf(std::string name, Tensor value);
  // Non-differentiable input.
  NodeId constant(Tensor value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, Shape shape);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  // Heaviside step (x > 0). Zero derivative everywhere.
  NodeId step(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Row-wise over the last axis for rank-1 or rank-2 inputs.
  NodeId softmax(NodeId a);
  NodeId log_softmax(NodeId a);
  NodeId l2_normalize(NodeId a);
  NodeId scale(NodeId a, double factor);
  // Concatenate rank-2 tensors along rows.
  NodeId concat(std::span<const NodeId> parts);
  NodeId slice_rows(NodeId a, std::size_t start, std::size_t count);
  // Gathers flat elements into a rank-1 tensor.
  NodeId index_select(NodeId a, std::vector<std::size_t> flat_indices);
  // Adjoint of index_select: zeros(shape) with values added at the indices.
  NodeId scatter_add(NodeId a, std::vector<std::size_t> flat_indices, Shape shape);

  const Tensor& value(NodeId id) const { return nodes_.at(id.value).value; }
  const Node& node(NodeId id) const { return nodes_.at(id.value); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::optional<NodeId> find_leaf(std::string_view name) const;
  std::vector<std::string> leaf_names() const;

  // Recomputes every node in id order. Leaves absent from the map keep their
  // current value; present ones must keep their declared shape.
  void evaluate(const LeafValues& leaf_values);

  // Adjoints of a scalar output with respect to arbitrary nodes. With
  // create_graph the returned ids are live graph nodes; without it the graph
  // is restored to its prior size and only the values survive.
  std::vector<NodeId> backward_nodes(NodeId output, std::span<const NodeId> wrt);
  std::vector<Tensor> backward_values(NodeId output, std::span<const NodeId> wrt);

  // Leaf-name front ends. Unknown names are an error. backward() keeps the
  // adjoint nodes (create_graph); gradient() returns detached values.
  std::map<std::string, NodeId> backward(NodeId output, std::span<const std::string> wrt);
  LeafValues gradient(NodeId output, std::span<const std::string> wrt);

  // Drops every node with id >= n.
  void truncate(std::size_t n);

 private:
  NodeId push(Node node);
  Tensor compute(const Node& node) const;
  NodeId ones_like(const Shape& shape);
  NodeId zeros(const Shape& shape);
  NodeId rowsum_broadcast(NodeId a);
  void vjp(NodeId id, NodeId grad, std::vector<std::optional<NodeId>>& adjoints, const std::vector<char>& active);
  void accumulate(std::vector<std::optional<NodeId>>& adjoints, NodeId target, NodeId contribution);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> leaves_;
};

}  // namespace bmssl
