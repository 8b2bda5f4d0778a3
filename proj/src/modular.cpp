// SPDX-License-Identifier: Apache-2.0
#include "amn/modular.hpp"

#include "amn/error.hpp"
#include "amn/ops.hpp"

namespace amn {

std::string to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::kAnb: return "anb";
    case UnitKind::kLinear: return "linear";
    case UnitKind::kExu: return "exu";
  }
  return "?";
}

UnitKind parse_unit_kind(std::string_view text) {
  if (text == "anb") return UnitKind::kAnb;
  if (text == "linear") return UnitKind::kLinear;
  if (text == "exu") return UnitKind::kExu;
  throw ConfigError("unknown unit kind '" + std::string(text) + "' (expected anb, linear or exu)");
}

Tensor anb_forward(const Tensor& x, const AnbState& s) {
  const Index width = s.w_init.dim(1);
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw DimensionError("module input must be [batch, 1], got " + to_string(x.shape()));
  }
  const Tensor shifted = broadcast_to(x, {x.dim(0), width}) - s.bias;
  return relu(shifted * s.w_init * s.f);
}

FeatureModule FeatureModule::init(UnitKind unit, Index h1, Index h2, double dropout, Rng& rng) {
  check_dropout_rate(dropout, "module dropout rate");
  FeatureModule m;
  m.unit = unit;
  m.dropout = dropout;
  if (unit == UnitKind::kExu) {
    ExuParams p = ExuParams::init(1, h1, rng);
    m.unit_weight = p.weight;
    m.unit_bias = p.bias;
  } else {
    m.unit_weight = xavier_uniform({1, h1}, 1, h1, rng);
    m.unit_bias = Tensor::zeros({h1}, true);
  }
  m.hidden = LinearParams::xavier(h1, h2, rng);
  m.output = LinearParams::xavier(h2, 1, rng);
  return m;
}

void FeatureModule::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".unit_weight", unit_weight});
  out.push_back({prefix + ".unit_bias", unit_bias});
  hidden.collect(prefix + ".hidden", out);
  output.collect(prefix + ".output", out);
}

Tensor module_forward(const Tensor& x, const FeatureModule& m, const Tensor& f, bool training,
                      Rng& rng) {
  if (x.rank() != 2 || x.dim(1) != 1) {
    throw DimensionError("module input must be [batch, 1], got " + to_string(x.shape()));
  }
  Tensor h;
  switch (m.unit) {
    case UnitKind::kAnb:
      if (!f.defined()) throw ContractError("ANB module needs an attention weight");
      h = anb_forward(x, {m.unit_weight, m.unit_bias, f});
      break;
    case UnitKind::kLinear:
      h = relu(matmul(x, m.unit_weight) + m.unit_bias);
      break;
    case UnitKind::kExu:
      h = exu(x, {m.unit_weight, m.unit_bias});
      break;
  }
  h = dropout(h, m.dropout, training, rng);
  h = relu(linear(h, m.hidden));
  return linear(h, m.output);
}

void ModularEnsemble::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".beta", beta});
}

EnsembleOutput ensemble_forward(const Tensor& xs, const ModularEnsemble& e, const Tensor& f,
                                bool training, Rng& rng) {
  const auto n = static_cast<Index>(e.modules.size());
  if (xs.rank() != 2 || xs.dim(1) != n) {
    throw ContractError("ensemble of " + std::to_string(n) + " modules got input " +
                        to_string(xs.shape()));
  }
  const Index batch = xs.dim(0);
  const bool per_sample_f = f.defined() && f.rank() == 2;
  std::vector<Tensor> parts;
  parts.reserve(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    const auto& m = e.modules[static_cast<std::size_t>(j)];
    Tensor fj;
    if (m.unit == UnitKind::kAnb) {
      if (!f.defined()) throw ContractError("ANB modules need attention weights");
      fj = per_sample_f ? slice(f, 1, j, 1) : slice(f, 0, j, 1);
    }
    // Inputs are data, so the column is taken without recording an op.
    Tensor xj = Tensor::from_matrix(xs.matrix().col(j), false);
    parts.push_back(module_forward(reshape(xj, {batch, 1}), m, fj, training, rng));
  }
  Tensor contributions = concat(parts, 1);
  Tensor beta = e.beta;
  if (training) {
    contributions = dropout(contributions, e.output_dropout, true, rng);
  } else {
    contributions = snap_to_grid(contributions, kAdditiveGridBits);
    beta = snap_to_grid(beta, kAdditiveGridBits);
  }
  Tensor prediction = sum(contributions, 1) + beta;
  return {std::move(prediction), std::move(contributions), beta.item()};
}

}  // namespace amn
