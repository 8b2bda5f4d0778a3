// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/layers.hpp"
#include "amn/tensor.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace amn {

/// First-layer unit of a feature module.
enum class UnitKind {
  kAnb,     // attention-scaled node bootstrapping
  kLinear,  // plain linear + relu
  kExu,     // exp-centred unit
};

std::string to_string(UnitKind kind);
/// Accepts "anb", "linear", "exu". Throws ConfigError otherwise.
UnitKind parse_unit_kind(std::string_view text);

/// First-layer state of an attention-bootstrapped unit. The effective weights
/// w_init * f are rebuilt on every call.
struct AnbState {
  Tensor w_init;  // [1, h1]
  Tensor bias;    // [h1], one shift per node
  Tensor f;       // attention weight: scalar, or [B, 1] per sample
};

/// relu((x - bias) . (w_init * f)) for x [B, 1] -> [B, h1].
Tensor anb_forward(const Tensor& x, const AnbState& s);

/// A univariate network: unit -> dropout -> linear/relu -> linear.
struct FeatureModule {
  UnitKind unit = UnitKind::kAnb;
  Tensor unit_weight;  // [1, h1]; log-scale for ExU
  Tensor unit_bias;    // [h1]; [1] for ExU
  LinearParams hidden;  // [h1, h2]
  LinearParams output;  // [h2, 1]
  double dropout = 0.0;

  static FeatureModule init(UnitKind unit, Index h1, Index h2, double dropout, Rng& rng);
  Index width() const { return unit_weight.dim(1); }
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// x [B, 1] -> contribution [B, 1]. `f` is only read by ANB units.
Tensor module_forward(const Tensor& x, const FeatureModule& m, const Tensor& f, bool training,
                      Rng& rng);

struct ModularEnsemble {
  std::vector<FeatureModule> modules;
  Tensor beta;  // scalar output offset
  double output_dropout = 0.0;

  void collect(const std::string& prefix, ParameterList& out) const;
};

struct EnsembleOutput {
  Tensor prediction;     // [B], pre-link
  Tensor contributions;  // [B, n]
  double beta = 0.0;     // offset actually added to the contributions
};

/// Number of fractional bits kept in evaluation mode. Snapping contributions
/// and beta to this dyadic grid makes their sum exact, so
/// prediction - beta == sum(contributions) holds bit for bit.
inline constexpr int kAdditiveGridBits = 32;

/// xs [B, n] -> beta + sum of module contributions. `f` holds each module's
/// attention weight ([n] or [B, n]); it may be undefined when no module is
/// ANB. Output dropout is applied to the contribution vector in training.
EnsembleOutput ensemble_forward(const Tensor& xs, const ModularEnsemble& e, const Tensor& f,
                                bool training, Rng& rng);

}  // namespace amn
