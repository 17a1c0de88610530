#include "bmssl/params.hpp"

#include <algorithm>
#include <cmath>

#include "bmssl/error.hpp"

namespace bmssl {

void ParamSet::insert(std::string name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

Tensor& ParamSet::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw ValidationError("no parameter named '" + std::string(name) + "'");
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::size_t ParamSet::dimension() const {
  std::size_t d = 0;
  for (const auto& e : entries_) d += e.second.size();
  return d;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(dimension());
  for (const auto& e : entries_) flat.insert(flat.end(), e.second.data().begin(), e.second.data().end());
  return flat;
}

ParamSet ParamSet::unflatten(const ParamSet& layout, std::span<const double> flat) {
  if (flat.size() != layout.dimension()) {
    throw ShapeError("unflatten: expected " + std::to_string(layout.dimension()) + " values, got " +
                     std::to_string(flat.size()));
  }
  ParamSet out;
  std::size_t offset = 0;
  for (const auto& [name, t] : layout.entries_) {
    std::vector<double> data(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                             flat.begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
    offset += t.size();
    out.insert(name, Tensor(t.shape(), std::move(data)));
  }
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape() != other.entries_[i].second.shape()) return false;
  }
  return true;
}

namespace {

void require_layout(const ParamSet& a, const ParamSet& b, const char* what) {
  if (!a.same_layout(b)) throw ShapeError(std::string(what) + ": parameter layouts differ");
}

}  // namespace

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bitwise_equal(a.entries()[i].second, b.entries()[i].second)) return false;
  }
  return true;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b) {
  require_layout(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, max_abs_diff(a.entries()[i].second, b.entries()[i].second));
  return m;
}

double l2_norm(const ParamSet& p) {
  double s = 0.0;
  for (const auto& [name, t] : p)
    for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

ParamSet axpy_sub(const ParamSet& a, const ParamSet& b, double factor) {
  require_layout(a, b, "axpy_sub");
  ParamSet out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Tensor& x = a.entries()[i].second;
    const Tensor& y = b.entries()[i].second;
    std::vector<double> data(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) data[j] = x[j] - y[j] * factor;
    out.insert(a.entries()[i].first, Tensor(x.shape(), std::move(data)));
  }
  return out;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet out;
  for (const auto& [name, t] : p) out.insert(name, Tensor(t.shape()));
  return out;
}

void accumulate(ParamSet& acc, const ParamSet& b) {
  require_layout(acc, b, "accumulate");
  for (std::size_t i = 0; i < b.size(); ++i) {
    Tensor& x = acc.at(b.entries()[i].first);
    const Tensor& y = b.entries()[i].second;
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += y[j];
  }
}

ParamSet scaled(const ParamSet& p, double factor) {
  ParamSet out;
  for (const auto& [name, t] : p) {
    std::vector<double> data(t.size());
    for (std::size_t j = 0; j < t.size(); ++j) data[j] = t[j] * factor;
    out.insert(name, Tensor(t.shape(), std::move(data)));
  }
  return out;
}

NodeId ParamNodes::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return ids[i];
  throw ValidationError("no parameter node named '" + std::string(name) + "'");
}

ParamNodes register_leaves(ExprGraph& graph, const ParamSet& params, std::string_view prefix) {
  ParamNodes nodes;
  for (const auto& [name, t] : params) {
    nodes.names.push_back(name);
    nodes.ids.push_back(graph.leaf(std::string(prefix) + name, t));
  }
  return nodes;
}

ParamNodes register_constants(ExprGraph& graph, const ParamSet& params) {
  ParamNodes nodes;
  for (const auto& [name, t] : params) {
    nodes.names.push_back(name);
    nodes.ids.push_back(graph.constant(t));
  }
  return nodes;
}

ParamSet read_values(const ExprGraph& graph, const ParamNodes& nodes) {
  ParamSet out;
  for (std::size_t i = 0; i < nodes.names.size(); ++i) out.insert(nodes.names[i], graph.value(nodes.ids[i]));
  return out;
}

}  // namespace bmssl
