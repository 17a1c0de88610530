#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bmssl/graph.hpp"
#include "bmssl/tensor.hpp"

namespace bmssl {

// Ordered named tensors. Order is insertion order and is part of the
// identity: flatten(), serialization and gradient reductions follow it.
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void insert(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<std::string> names() const;
  std::size_t dimension() const;

  std::vector<double> flatten() const;
  // Same names and shapes as `layout`, values taken from `flat`.
  static ParamSet unflatten(const ParamSet& layout, std::span<const double> flat);

  bool same_layout(const ParamSet& other) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
};

bool bitwise_equal(const ParamSet& a, const ParamSet& b);
double max_abs_diff(const ParamSet& a, const ParamSet& b);
double l2_norm(const ParamSet& p);

// a - factor * b, element-wise.
ParamSet axpy_sub(const ParamSet& a, const ParamSet& b, double factor);
ParamSet zeros_like(const ParamSet& p);
// acc += b
void accumulate(ParamSet& acc, const ParamSet& b);
ParamSet scaled(const ParamSet& p, double factor);

// Graph handles for a ParamSet, parallel to its entry order.
struct ParamNodes {
  std::vector<std::string> names;
  std::vector<NodeId> ids;

  NodeId at(std::string_view name) const;
};

// Registers each tensor as a differentiable leaf named prefix + name.
ParamNodes register_leaves(ExprGraph& graph, const ParamSet& params, std::string_view prefix = "");
ParamNodes register_constants(ExprGraph& graph, const ParamSet& params);
ParamSet read_values(const ExprGraph& graph, const ParamNodes& nodes);

}  // namespace bmssl
