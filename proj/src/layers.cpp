// SPDX-License-Identifier: Apache-2.0
#include "amn/layers.hpp"

#include "amn/error.hpp"
#include "amn/ops.hpp"

#include <cmath>

namespace amn {

namespace {

void expect_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape() != want) {
    throw DimensionError(std::string(what) + " has shape " + to_string(t.shape()) +
                         ", expected " + to_string(want));
  }
}

void expect_batch(const Tensor& x, Index features, const char* what) {
  if (x.rank() != 2 || x.dim(1) != features) {
    throw DimensionError(std::string(what) + " has shape " + to_string(x.shape()) +
                         ", expected [batch, " + std::to_string(features) + "]");
  }
}

}  // namespace

Tensor xavier_uniform(Shape shape, Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Vector v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

LinearParams LinearParams::xavier(Index in, Index out, Rng& rng) {
  return {xavier_uniform({in, out}, in, out, rng), Tensor::zeros({out}, true)};
}

void LinearParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  if (x.rank() < 2 || x.dim(-1) != p.in()) {
    throw DimensionError("linear input " + to_string(x.shape()) + " does not match weight " +
                         to_string(p.weight.shape()));
  }
  return matmul(x, p.weight) + p.bias;
}

LayerNormParams LayerNormParams::identity(Index hidden, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("layer norm epsilon must be positive");
  return {Tensor::full({hidden}, 1.0, true), Tensor::zeros({hidden}, true), epsilon};
}

void LayerNormParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  if (x.rank() < 1 || x.dim(-1) != p.gain.size()) {
    throw DimensionError("layer_norm input " + to_string(x.shape()) + " vs gain " +
                         to_string(p.gain.shape()));
  }
  const Tensor centred = x - mean(x, -1, true);
  const Tensor var = mean(square(centred), -1, true);
  return centred / sqrt(var + p.epsilon) * p.gain + p.bias;
}

void check_dropout_rate(double rate, const std::string& what) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError(what + " must be in [0, 1), got " + std::to_string(rate));
  }
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  check_dropout_rate(rate);
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Vector mask(x.size());
  for (Index i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? s : 0.0;
  return x * Tensor(x.shape(), std::move(mask));
}

ExuParams ExuParams::init(Index in, Index out, Rng& rng) {
  std::normal_distribution<double> w(4.0, 0.5);
  std::normal_distribution<double> b(0.0, 0.5);
  Vector wv(in * out);
  for (Index i = 0; i < wv.size(); ++i) wv[i] = w(rng);
  Vector bv(in);
  for (Index i = 0; i < bv.size(); ++i) bv[i] = b(rng);
  return {Tensor({in, out}, std::move(wv), true), Tensor({in}, std::move(bv), true)};
}

void ExuParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor exu(const Tensor& x, const ExuParams& p) {
  expect_batch(x, p.weight.dim(0), "exu input");
  return relu(matmul(x - p.bias, exp(p.weight)));
}

LstmParams LstmParams::xavier(Index in, Index hidden, Rng& rng) {
  return {xavier_uniform({in, 4 * hidden}, in, hidden, rng),
          xavier_uniform({hidden, 4 * hidden}, hidden, hidden, rng),
          Tensor::zeros({4 * hidden}, true)};
}

LstmParams LstmParams::zeros(Index in, Index hidden) {
  return {Tensor::zeros({in, 4 * hidden}, true), Tensor::zeros({hidden, 4 * hidden}, true),
          Tensor::zeros({4 * hidden}, true)};
}

void LstmParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_x", w_x});
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".b", b});
}

namespace {
bool zero_state(const Tensor& h) { return !h.requires_grad() && h.values().isZero(0.0); }
}  // namespace

LstmState lstm_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p) {
  const Index hidden = p.hidden();
  expect_shape(p.w_x, {p.in(), 4 * hidden}, "lstm w_x");
  expect_shape(p.b, {4 * hidden}, "lstm b");
  expect_batch(x, p.in(), "lstm input");
  expect_shape(h_prev, {x.dim(0), hidden}, "lstm h_prev");
  expect_shape(c_prev, {x.dim(0), hidden}, "lstm c_prev");

  // A constant zero state (the first step) contributes nothing through w_h.
  const Tensor z = zero_state(h_prev) ? matmul(x, p.w_x) + p.b
                                      : matmul(x, p.w_x) + matmul(h_prev, p.w_h) + p.b;
  const Tensor f = sigmoid(slice(z, 1, 0, hidden));
  const Tensor i = sigmoid(slice(z, 1, hidden, hidden));
  const Tensor s = tanh(slice(z, 1, 2 * hidden, hidden));
  const Tensor o = sigmoid(slice(z, 1, 3 * hidden, hidden));
  const Tensor c = f * c_prev + i * s;
  return {tanh(c) * o, c};
}

GruParams GruParams::xavier(Index in, Index hidden, Rng& rng) {
  return {xavier_uniform({in, 3 * hidden}, in, hidden, rng),
          xavier_uniform({hidden, 3 * hidden}, hidden, hidden, rng),
          Tensor::zeros({3 * hidden}, true), Tensor::zeros({3 * hidden}, true)};
}

GruParams GruParams::zeros(Index in, Index hidden) {
  return {Tensor::zeros({in, 3 * hidden}, true), Tensor::zeros({hidden, 3 * hidden}, true),
          Tensor::zeros({3 * hidden}, true), Tensor::zeros({3 * hidden}, true)};
}

void GruParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_x", w_x});
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".b_x", b_x});
  out.push_back({prefix + ".b_h", b_h});
}

Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p) {
  const Index hidden = p.hidden();
  expect_shape(p.w_x, {p.in(), 3 * hidden}, "gru w_x");
  expect_batch(x, p.in(), "gru input");
  expect_shape(h_prev, {x.dim(0), hidden}, "gru h_prev");

  const Tensor gx = matmul(x, p.w_x) + p.b_x;
  const Tensor gh = zero_state(h_prev) ? broadcast_to(p.b_h, {x.dim(0), 3 * hidden})
                                       : matmul(h_prev, p.w_h) + p.b_h;
  const Tensor r = sigmoid(slice(gx, 1, 0, hidden) + slice(gh, 1, 0, hidden));
  const Tensor z = sigmoid(slice(gx, 1, hidden, hidden) + slice(gh, 1, hidden, hidden));
  const Tensor n = tanh(slice(gx, 1, 2 * hidden, hidden) + r * slice(gh, 1, 2 * hidden, hidden));
  return (1.0 - z) * n + z * h_prev;
}

}  // namespace amn
