#pragma once

#include <cstdint>
#include <vector>

#include "bmssl/graph.hpp"
#include "bmssl/image.hpp"
#include "bmssl/params.hpp"

namespace bmssl {

// Task network: two tanh dense layers (feature extractor), a dense projection
// head whose rows are L2-normalized, and a dense classifier on the features.
struct ModelDims {
  std::size_t input = 256;
  std::size_t hidden = 64;
  std::size_t projection = 16;
  std::size_t classes = 4;
};

// Parameter names, in ParamSet order.
inline constexpr const char* kExtractorW1 = "extractor.w1";
inline constexpr const char* kExtractorB1 = "extractor.b1";
inline constexpr const char* kExtractorW2 = "extractor.w2";
inline constexpr const char* kExtractorB2 = "extractor.b2";
inline constexpr const char* kProjectionW = "projection.w";
inline constexpr const char* kProjectionB = "projection.b";
inline constexpr const char* kClassifierW = "classifier.w";
inline constexpr const char* kClassifierB = "classifier.b";

// Weights ~ N(0, 1/fan_in), biases zero.
ParamSet init_params(const ModelDims& dims, std::uint64_t seed);
ParamSet zero_params(const ModelDims& dims);
ModelDims infer_dims(const ParamSet& params);

// Keeps the first `way` classifier outputs.
ParamSet restrict_classifier(const ParamSet& params, std::size_t way);

// Stacks images into a [views, pixels] tensor.
Tensor views_tensor(const std::vector<const Image*>& views);

struct ModelOutputs {
  NodeId features;
  NodeId projections;
  NodeId logits;
};

ModelOutputs forward(ExprGraph& graph, const ParamNodes& params, NodeId views);

// Mean negative log-softmax probability of the true label.
NodeId loss_ce(ExprGraph& graph, NodeId logits, const std::vector<std::size_t>& labels);

// Multi-positive NT-Xent. For anchor i with positives P(i) (same label, not i)
// and negatives N(i): -log(sum_P e^{s/tau} / (sum_P e^{s/tau} + sum_N e^{s/tau})),
// s the dot product of unit projections, averaged over anchors.
NodeId loss_cl(ExprGraph& graph, NodeId projections, const std::vector<std::size_t>& labels, double tau);

// True when every label present has at least two views.
bool has_positive_pairs(const std::vector<std::size_t>& labels);

struct LossWeights {
  double lambda = 1.0;
  double tau = 0.5;
};

// loss_ce + lambda * loss_cl. With lambda == 0 the contrastive term is not built.
NodeId loss_total(ExprGraph& graph, const ParamNodes& params, NodeId views, const std::vector<std::size_t>& labels,
                  const LossWeights& weights);

NodeId predictive_distribution(ExprGraph& graph, const ParamNodes& params, NodeId views);
NodeId log_predictive_distribution(ExprGraph& graph, const ParamNodes& params, NodeId views);

}  // namespace bmssl
