#include "bmssl/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bmssl/error.hpp"
#include "bmssl/rng.hpp"

namespace bmssl {

namespace {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace

ParamSet init_params(const ModelDims& dims, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417));
  auto w = [&](std::size_t fan_in, std::size_t fan_out) {
    return gaussian({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  };
  ParamSet p;
  p.insert(kExtractorW1, w(dims.input, dims.hidden));
  p.insert(kExtractorB1, Tensor({dims.hidden}));
  p.insert(kExtractorW2, w(dims.hidden, dims.hidden));
  p.insert(kExtractorB2, Tensor({dims.hidden}));
  p.insert(kProjectionW, w(dims.hidden, dims.projection));
  p.insert(kProjectionB, Tensor({dims.projection}));
  p.insert(kClassifierW, w(dims.hidden, dims.classes));
  p.insert(kClassifierB, Tensor({dims.classes}));
  return p;
}

ParamSet zero_params(const ModelDims& dims) {
  ParamSet p;
  p.insert(kExtractorW1, Tensor({dims.input, dims.hidden}));
  p.insert(kExtractorB1, Tensor({dims.hidden}));
  p.insert(kExtractorW2, Tensor({dims.hidden, dims.hidden}));
  p.insert(kExtractorB2, Tensor({dims.hidden}));
  p.insert(kProjectionW, Tensor({dims.hidden, dims.projection}));
  p.insert(kProjectionB, Tensor({dims.projection}));
  p.insert(kClassifierW, Tensor({dims.hidden, dims.classes}));
  p.insert(kClassifierB, Tensor({dims.classes}));
  return p;
}

ModelDims infer_dims(const ParamSet& params) {
  ModelDims d;
  const Tensor& w1 = params.at(kExtractorW1);
  const Tensor& wp = params.at(kProjectionW);
  const Tensor& wc = params.at(kClassifierW);
  d.input = w1.rows();
  d.hidden = w1.cols();
  d.projection = wp.cols();
  d.classes = wc.cols();
  if (!params.same_layout(zero_params(d))) throw ShapeError("parameter set is not a consistent model layout");
  return d;
}

ParamSet restrict_classifier(const ParamSet& params, std::size_t way) {
  const ModelDims dims = infer_dims(params);
  if (way == 0 || way > dims.classes) {
    throw ValidationError("cannot restrict a " + std::to_string(dims.classes) + "-output classifier to " +
                          std::to_string(way) + " classes");
  }
  ParamSet out;
  for (const auto& [name, t] : params) {
    if (name == kClassifierW) {
      Tensor w({dims.hidden, way});
      for (std::size_t r = 0; r < dims.hidden; ++r)
        for (std::size_t c = 0; c < way; ++c) w.at(r, c) = t.at(r, c);
      out.insert(name, std::move(w));
    } else if (name == kClassifierB) {
      Tensor b({way});
      for (std::size_t c = 0; c < way; ++c) b[c] = t[c];
      out.insert(name, std::move(b));
    } else {
      out.insert(name, t);
    }
  }
  return out;
}

Tensor views_tensor(const std::vector<const Image*>& views) {
  if (views.empty()) throw ValidationError("no views to stack");
  const std::size_t dim = views.front()->size();
  std::vector<double> data;
  data.reserve(views.size() * dim);
  for (const Image* img : views) {
    if (img->size() != dim) throw ShapeError("views have inconsistent pixel counts");
    data.insert(data.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor({views.size(), dim}, std::move(data));
}

ModelOutputs forward(ExprGraph& graph, const ParamNodes& params, NodeId views) {
  const Tensor& x = graph.value(views);
  const Tensor& w1 = graph.value(params.at(kExtractorW1));
  if (x.rank() != 2 || x.cols() != w1.rows()) {
    throw ShapeError("forward: views " + shape_to_string(x.shape()) + " do not match extractor input " +
                     std::to_string(w1.rows()));
  }
  const NodeId h1 = graph.tanh(graph.add(graph.matmul(views, params.at(kExtractorW1)), params.at(kExtractorB1)));
  const NodeId h = graph.tanh(graph.add(graph.matmul(h1, params.at(kExtractorW2)), params.at(kExtractorB2)));
  const NodeId z = graph.add(graph.matmul(h, params.at(kProjectionW)), params.at(kProjectionB));
  const NodeId logits = graph.add(graph.matmul(h, params.at(kClassifierW)), params.at(kClassifierB));
  return {h, graph.l2_normalize(z), logits};
}

NodeId loss_ce(ExprGraph& graph, NodeId logits, const std::vector<std::size_t>& labels) {
  const Tensor& l = graph.value(logits);
  if (l.rank() != 2 || l.rows() != labels.size()) {
    throw ShapeError("loss_ce: logits " + shape_to_string(l.shape()) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = l.cols();
  std::vector<std::size_t> flat(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n) {
      throw ValidationError("loss_ce: label " + std::to_string(labels[i]) + " out of range for " + std::to_string(n) +
                            " classes");
    }
    flat[i] = i * n + labels[i];
  }
  const NodeId picked = graph.index_select(graph.log_softmax(logits), std::move(flat));
  return graph.scale(graph.mean(picked), -1.0);
}

bool has_positive_pairs(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> counts;
  for (auto l : labels) ++counts[l];
  return std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second >= 2; });
}

NodeId loss_cl(ExprGraph& graph, NodeId projections, const std::vector<std::size_t>& labels, double tau) {
  if (!(tau > 0.0)) throw ValidationError("loss_cl: temperature must be positive");
  const Tensor& p = graph.value(projections);
  const std::size_t v = labels.size();
  if (p.rank() != 2 || p.rows() != v) {
    throw ShapeError("loss_cl: projections " + shape_to_string(p.shape()) + " vs " + std::to_string(v) + " labels");
  }
  if (!has_positive_pairs(labels)) throw ValidationError("loss_cl: every label needs at least two views");

  Tensor positive({v, v});
  Tensor others({v, v});
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      if (i == j) continue;
      others.at(i, j) = 1.0;
      if (labels[i] == labels[j]) positive.at(i, j) = 1.0;
    }
  }
  const NodeId sim = graph.scale(graph.matmul(projections, graph.transpose(projections)), 1.0 / tau);
  const NodeId e = graph.exp(sim);
  const NodeId ones = graph.constant(Tensor::filled({v, 1}, 1.0));
  const NodeId pos = graph.matmul(graph.mul(e, graph.constant(std::move(positive))), ones);
  const NodeId all = graph.matmul(graph.mul(e, graph.constant(std::move(others))), ones);
  return graph.mean(graph.sub(graph.log(all), graph.log(pos)));
}

NodeId loss_total(ExprGraph& graph, const ParamNodes& params, NodeId views, const std::vector<std::size_t>& labels,
                  const LossWeights& weights) {
  const ModelOutputs out = forward(graph, params, views);
  const NodeId ce = loss_ce(graph, out.logits, labels);
  if (weights.lambda == 0.0) return ce;
  const NodeId cl = loss_cl(graph, out.projections, labels, weights.tau);
  return graph.add(ce, graph.scale(cl, weights.lambda));
}

NodeId predictive_distribution(ExprGraph& graph, const ParamNodes& params, NodeId views) {
  return graph.softmax(forward(graph, params, views).logits);
}

NodeId log_predictive_distribution(ExprGraph& graph, const ParamNodes& params, NodeId views) {
  return graph.log_softmax(forward(graph, params, views).logits);
}

}  // namespace bmssl
