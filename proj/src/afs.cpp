// SPDX-License-Identifier: Apache-2.0
#include "amn/afs.hpp"

#include "amn/error.hpp"
#include "amn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace amn {

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 2 || k.rank() != q.rank() || v.rank() != q.rank()) {
    throw DimensionError("attention operands need equal rank >= 2: " + to_string(q.shape()) +
                         ", " + to_string(k.shape()) + ", " + to_string(v.shape()));
  }
  if (q.dim(-1) != k.dim(-1)) {
    throw DimensionError("attention query width " + std::to_string(q.dim(-1)) +
                         " differs from key width " + std::to_string(k.dim(-1)));
  }
  if (k.dim(-2) != v.dim(-2)) {
    throw DimensionError("attention keys " + to_string(k.shape()) + " and values " +
                         to_string(v.shape()) + " differ in token count");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.dim(-1)));
  Tensor attention = softmax(matmul(q, transpose(k)) * inv_sqrt_dk);
  Tensor output = matmul(attention, v);
  return {std::move(output), std::move(attention)};
}

AfsParams AfsParams::xavier(Index features, Index d_model, Index num_heads, Rng& rng) {
  if (features < 1) throw ContractError("attention feature selection needs at least one feature");
  if (num_heads < 1) throw ConfigError("num_heads must be >= 1");
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  const Index d_v = d_model / num_heads;
  AfsParams p;
  for (Index h = 0; h < num_heads; ++h) {
    p.heads.push_back({xavier_uniform({d_model, d_v}, d_model, d_v, rng),
                       xavier_uniform({d_model, d_v}, d_model, d_v, rng),
                       xavier_uniform({d_model, d_v}, d_model, d_v, rng)});
  }
  p.w_combine = xavier_uniform({num_heads * d_v, d_model}, num_heads * d_v, d_model, rng);
  // Equal weights: a random draw would steer F towards whichever features
  // the aux head happened to favour at initialization.
  p.aux = {Tensor::full({features, 1}, 1.0, true), Tensor::zeros({1}, true)};
  return p;
}

void AfsParams::collect(const std::string& prefix, ParameterList& out) const {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    out.push_back({hp + ".w_q", heads[h].w_q});
    out.push_back({hp + ".w_k", heads[h].w_k});
    out.push_back({hp + ".w_v", heads[h].w_v});
  }
  out.push_back({prefix + ".w_combine", w_combine});
  aux.collect(prefix + ".aux", out);
}

AfsOutput afs_forward(const Tensor& r, const AfsParams& p) {
  if (r.rank() != 3) {
    throw DimensionError("feature tokens must be [batch, features, d_model], got " +
                         to_string(r.shape()));
  }
  if (r.dim(1) < 1) throw ContractError("attention feature selection needs at least one feature");
  if (r.dim(1) != p.features() || r.dim(2) != p.d_model()) {
    throw DimensionError("feature tokens " + to_string(r.shape()) + " do not match parameters (" +
                         std::to_string(p.features()) + " features, d_model " +
                         std::to_string(p.d_model()) + ")");
  }
  AfsOutput out;
  std::vector<Tensor> head_outputs;
  Tensor pooled;
  for (const AttentionHead& head : p.heads) {
    AttentionResult a =
        scaled_dot_attention(matmul(r, head.w_q), matmul(r, head.w_k), matmul(r, head.w_v));
    // Mass received by each key token, averaged over query positions.
    Tensor received = mean(a.attention, 1);
    pooled = pooled.defined() ? pooled + received : received;
    head_outputs.push_back(std::move(a.output));
    out.attention.push_back(std::move(a.attention));
  }
  out.scores = pooled * (1.0 / static_cast<double>(p.num_heads()));
  out.weights = softmax(out.scores);
  out.combined = matmul(concat(head_outputs, -1), p.w_combine);
  out.aux_prediction = linear(relu(mean(out.combined, -1) * out.weights), p.aux);
  return out;
}

std::vector<Index> select_top_n(std::span<const double> weights, Index n) {
  const auto count = static_cast<Index>(weights.size());
  if (n < 1 || n > count) {
    throw ConfigError("number of selected features must be in [1, " + std::to_string(count) +
                      "], got " + std::to_string(n));
  }
  std::vector<Index> order(weights.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return weights[static_cast<std::size_t>(a)] > weights[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(n));
  return order;
}

nlohmann::ordered_json feature_weights_json(std::span<const std::string> names,
                                            std::span<const double> weights) {
  if (names.size() != weights.size()) {
    throw ContractError("feature name count differs from weight count");
  }
  const auto order = select_top_n(weights, static_cast<Index>(weights.size()));
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (Index i : order) {
    j[names[static_cast<std::size_t>(i)]] = weights[static_cast<std::size_t>(i)];
  }
  return j;
}

}  // namespace amn
