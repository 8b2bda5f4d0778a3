// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/layers.hpp"
#include "amn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace amn {

struct AttentionResult {
  Tensor output;     // [..., N, d_v]
  Tensor attention;  // [..., N, N], rows sum to one
};

/// softmax(Q K^T / sqrt(d_k)) V over the last two axes. Q and K must share
/// their feature extent; leading (batch) extents must agree.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct AttentionHead {
  Tensor w_q;  // [d_model, d_v]
  Tensor w_k;  // [d_model, d_v]
  Tensor w_v;  // [d_model, d_v]
};

/// Attention-based feature selection. Every feature is one token of R; each
/// head attends over all feature tokens, and the attention mass a token
/// receives, averaged over heads and query positions, is its raw score.
struct AfsParams {
  std::vector<AttentionHead> heads;
  Tensor w_combine;  // [heads * d_v, d_model]
  LinearParams aux;  // [features, 1]: auxiliary prediction head

  static AfsParams xavier(Index features, Index d_model, Index num_heads, Rng& rng);
  Index num_heads() const { return static_cast<Index>(heads.size()); }
  Index d_model() const { return w_combine.dim(1); }
  Index d_v() const { return heads.front().w_v.dim(1); }
  Index features() const { return aux.in(); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AfsOutput {
  Tensor scores;          // [B, D] pooled attention mass per feature
  Tensor weights;         // [B, D] softmax(scores): the feature weights F
  Tensor combined;        // [B, D, d_model] multi-head output
  Tensor aux_prediction;  // [B, 1]
  std::vector<Tensor> attention;  // per head, [B, D, D]
};

/// r: [B, D, d_model] feature tokens. Self-attention (Q = K = V = r).
AfsOutput afs_forward(const Tensor& r, const AfsParams& p);

/// Feature weights of one sample (or an average) plus the chosen indices.
struct FeatureWeights {
  std::vector<double> weights;
  std::vector<Index> selected;
};

/// Indices of the n largest weights in descending weight order; ties go to
/// the lower index. Throws ConfigError unless 1 <= n <= weights.size().
std::vector<Index> select_top_n(std::span<const double> weights, Index n);

/// {name: weight}, sorted by descending weight (ties by index).
nlohmann::ordered_json feature_weights_json(std::span<const std::string> names,
                                            std::span<const double> weights);

}  // namespace amn
