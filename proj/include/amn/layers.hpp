// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace amn {

using Rng = std::mt19937_64;

/// A parameter tensor with its stable, dotted name ("rnn.w_x").
struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

/// Glorot/Xavier uniform samples in +-sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, Index fan_in, Index fan_out, Rng& rng);

// Weights are stored input-major ([in, out]) so that a batch [B, in] maps to
// [B, out] with a single matmul.

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static LinearParams xavier(Index in, Index out, Rng& rng);
  Index in() const { return weight.dim(0); }
  Index out() const { return weight.dim(1); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

Tensor linear(const Tensor& x, const LinearParams& p);

struct LayerNormParams {
  Tensor gain;  // [hidden]
  Tensor bias;  // [hidden]
  double epsilon = 1e-5;

  static LayerNormParams identity(Index hidden, double epsilon = 1e-5);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// gain * (x - mean) / sqrt(var + epsilon) + bias over the last axis. With a
/// single hidden unit the centred input is zero and the result is `bias`.
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

/// Throws ConfigError unless 0 <= rate < 1.
void check_dropout_rate(double rate, const std::string& what = "dropout rate");

/// Inverted dropout. Identity (the same tensor) when not training or rate 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// NAM's exp-centred unit: relu((x - bias) . exp(weight)).
struct ExuParams {
  Tensor weight;  // [in, out], log-scale
  Tensor bias;    // [in]

  /// NAM initialisation: weight ~ N(4, 0.5), bias ~ N(0, 0.5).
  static ExuParams init(Index in, Index out, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

Tensor exu(const Tensor& x, const ExuParams& p);

/// LSTM weights with the four gates packed along the output axis in the
/// order forget, input, candidate (s), output.
struct LstmParams {
  Tensor w_x;  // [in, 4H]
  Tensor w_h;  // [H, 4H]
  Tensor b;    // [4H]

  static LstmParams xavier(Index in, Index hidden, Rng& rng);
  static LstmParams zeros(Index in, Index hidden);
  Index in() const { return w_x.dim(0); }
  Index hidden() const { return w_h.dim(0); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct LstmState {
  Tensor h;  // [B, H]
  Tensor c;  // [B, H]
};

/// One LSTM step over a batch: x [B, in], h_prev/c_prev [B, H].
LstmState lstm_step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
                    const LstmParams& p);

/// GRU weights, gates packed as reset, update, candidate.
struct GruParams {
  Tensor w_x;  // [in, 3H]
  Tensor w_h;  // [H, 3H]
  Tensor b_x;  // [3H]
  Tensor b_h;  // [3H]

  static GruParams xavier(Index in, Index hidden, Rng& rng);
  static GruParams zeros(Index in, Index hidden);
  Index in() const { return w_x.dim(0); }
  Index hidden() const { return w_h.dim(0); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// r = sig(x Wr + br + h Ur + cr), z likewise,
/// n = tanh(x Wn + bn + r . (h Un + cn)), h' = (1 - z) . n + z . h.
Tensor gru_step(const Tensor& x, const Tensor& h_prev, const GruParams& p);

}  // namespace amn
