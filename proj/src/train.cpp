// SPDX-License-Identifier: Apache-2.0
#include "amn/train.hpp"

#include "amn/error.hpp"
#include "amn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

namespace amn {

void TrainConfig::validate() const {
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must be in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (selection_epoch < 1 || selection_epoch > epochs) {
    throw ConfigError("selection_epoch must be in [1, epochs], got " + std::to_string(selection_epoch));
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0 (0 disables clipping)");
  if (n_features && *n_features < 1) throw ConfigError("n_features must be >= 1");
  if (rnn_hidden < 1 || d_model < 1 || num_heads < 1 || module_h1 < 1 || module_h2 < 1) {
    throw ConfigError("layer sizes must be >= 1");
  }
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  check_dropout_rate(rnn_dropout, "rnn dropout rate");
  check_dropout_rate(module_dropout, "module dropout rate");
  check_dropout_rate(output_dropout, "output dropout rate");
}

ModelConfig TrainConfig::model_config(Index window, Index channels) const {
  validate();
  ModelConfig m;
  m.task = task;
  m.rnn = rnn;
  m.unit = unit;
  m.window = window;
  m.channels = channels;
  m.rnn_hidden = rnn_hidden;
  m.d_model = d_model;
  m.num_heads = num_heads;
  m.module_h1 = module_h1;
  m.module_h2 = module_h2;
  m.n_features = n_features.value_or(std::min<Index>(10, window * channels));
  m.rnn_dropout = rnn_dropout;
  m.module_dropout = module_dropout;
  m.output_dropout = output_dropout;
  m.validate();
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["initial_lr"] = initial_lr;
  j["warmup_fraction"] = warmup_fraction;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["seed"] = seed;
  j["rnn_dropout"] = rnn_dropout;
  j["module_dropout"] = module_dropout;
  j["output_dropout"] = output_dropout;
  j["rnn_hidden"] = rnn_hidden;
  j["d_model"] = d_model;
  j["num_heads"] = num_heads;
  j["module_hidden"] = {module_h1, module_h2};
  j["n_features"] = n_features ? nlohmann::json(*n_features) : nlohmann::json(nullptr);
  j["selection_epoch"] = selection_epoch;
  j["rnn"] = to_string(rnn);
  j["unit"] = to_string(unit);
  j["task"] = to_string(task);
  j["grad_clip"] = grad_clip;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "initial_lr") c.initial_lr = v.get<double>();
      else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<Index>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "patience") c.patience = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "rnn_dropout") c.rnn_dropout = v.get<double>();
      else if (key == "module_dropout") c.module_dropout = v.get<double>();
      else if (key == "output_dropout") c.output_dropout = v.get<double>();
      else if (key == "rnn_hidden") c.rnn_hidden = v.get<Index>();
      else if (key == "d_model") c.d_model = v.get<Index>();
      else if (key == "num_heads") c.num_heads = v.get<Index>();
      else if (key == "module_hidden") {
        if (!v.is_array() || v.size() != 2) {
          throw ConfigError("module_hidden must list two layer widths");
        }
        c.module_h1 = v[0].get<Index>();
        c.module_h2 = v[1].get<Index>();
      } else if (key == "n_features") {
        c.n_features = v.is_null() ? std::nullopt : std::optional<Index>(v.get<Index>());
      } else if (key == "selection_epoch") c.selection_epoch = v.get<int>();
      else if (key == "rnn") c.rnn = parse_rnn_kind(v.get<std::string>());
      else if (key == "unit") c.unit = parse_unit_kind(v.get<std::string>());
      else if (key == "task") c.task = parse_task(v.get<std::string>());
      else if (key == "grad_clip") c.grad_clip = v.get<double>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value in training config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json LossReport::to_json() const {
  return {{"loss_rnn_afs", loss_rnn_afs}, {"loss_mod", loss_mod}, {"loss_amn", loss_amn}};
}

namespace {

void check_loss_inputs(Index a, Index b, const char* what) {
  if (a == 0) throw ContractError(std::string(what) + " of an empty batch");
  if (a != b) {
    throw ContractError(std::string(what) + ": " + std::to_string(a) + " predictions vs " +
                        std::to_string(b) + " targets");
  }
}

}  // namespace

Tensor mse(const Tensor& prediction, const Tensor& target) {
  check_loss_inputs(prediction.size(), target.size(), "mse");
  return mean(square(prediction - target));
}

double mse(std::span<const double> y, std::span<const double> yhat) {
  check_loss_inputs(static_cast<Index>(yhat.size()), static_cast<Index>(y.size()), "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += (yhat[i] - y[i]) * (yhat[i] - y[i]);
  return total / static_cast<double>(y.size());
}

Tensor bce_logits(const Tensor& logits, const Tensor& target) {
  check_loss_inputs(logits.size(), target.size(), "bce_logits");
  return bce_with_logits(logits, target);
}

double bce_logits(std::span<const double> y, std::span<const double> z) {
  check_loss_inputs(static_cast<Index>(z.size()), static_cast<Index>(y.size()), "bce_logits");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  return total / static_cast<double>(y.size());
}

JointLoss joint_loss(const ModelOutput& out, const Vector& targets, Task task) {
  const Tensor y({targets.size()}, targets);
  Tensor aux_loss;
  Tensor mod_loss;
  if (task == Task::kRegression) {
    aux_loss = mse(out.aux_prediction, y);
    mod_loss = mse(out.prediction, y);
  } else {
    aux_loss = bce_logits(out.aux_prediction, y);
    mod_loss = bce_logits(out.prediction, y);
  }
  JointLoss j;
  j.total = aux_loss + mod_loss;
  j.report = {aux_loss.item(), mod_loss.item(), j.total.item()};
  return j;
}

LossReport joint_loss_values(std::span<const double> aux, std::span<const double> prediction,
                             std::span<const double> targets, Task task) {
  LossReport r;
  if (task == Task::kRegression) {
    r.loss_rnn_afs = mse(targets, aux);
    r.loss_mod = mse(targets, prediction);
  } else {
    r.loss_rnn_afs = bce_logits(targets, aux);
    r.loss_mod = bce_logits(targets, prediction);
  }
  r.loss_amn = r.loss_rnn_afs + r.loss_mod;
  return r;
}

Index warmup_steps(Index total_steps, double warmup_fraction) {
  if (warmup_fraction <= 0.0) return 0;
  Index w = std::max<Index>(1, std::llround(warmup_fraction * static_cast<double>(total_steps)));
  // Leave at least one decay step so the final rate reaches zero.
  return std::max<Index>(0, std::min(w, total_steps - 2));
}

double cosine_warmup_lr(Index step, Index total_steps, double initial_lr, double warmup_fraction) {
  if (total_steps < 1) throw ConfigError("schedule needs at least one step");
  if (step < 0 || step >= total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside schedule of " +
                        std::to_string(total_steps) + " steps");
  }
  const Index w = warmup_steps(total_steps, warmup_fraction);
  if (step < w) return initial_lr * static_cast<double>(step) / static_cast<double>(w);
  const Index decay = total_steps - 1 - w;
  if (decay <= 0) return w == 0 && total_steps == 1 ? initial_lr : 0.0;
  const double progress = static_cast<double>(step - w) / static_cast<double>(decay);
  return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void Adam::step(const ParameterList& params, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    const Vector& g = p.tensor.grad();
    Moments& s = state_[p.name];
    if (s.m.size() != g.size()) {
      s.m = Vector::Zero(g.size());
      s.v = Vector::Zero(g.size());
      s.t = 0;
    }
    ++s.t;
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    Tensor t = p.tensor;
    Vector& w = t.values();
    for (Index i = 0; i < w.size(); ++i) {
      const double m_hat = s.m[i] / c1;
      const double v_hat = s.v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) sq += p.tensor.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto& g = const_cast<Vector&>(p.tensor.grad());
      g *= s;
    }
  }
  return norm;
}

LossReport evaluate_loss(const AmnModel& model, const SeriesDataset& ds) {
  constexpr Index kChunk = 512;
  const Index n = ds.size();
  if (n == 0) throw ContractError("cannot evaluate on an empty dataset");
  NoGradScope no_grad;
  Vector aux(n);
  Vector pred(n);
  for (Index start = 0; start < n; start += kChunk) {
    const Index len = std::min(kChunk, n - start);
    const ModelOutput o = model.evaluate(ds.inputs.middleRows(start, len));
    aux.segment(start, len) = o.aux_prediction.values();
    pred.segment(start, len) = o.prediction.values();
  }
  return joint_loss_values({aux.data(), static_cast<std::size_t>(n)},
                           {pred.data(), static_cast<std::size_t>(n)},
                           {ds.targets.data(), static_cast<std::size_t>(n)}, model.config().task);
}

nlohmann::ordered_json EpochRecord::to_json(std::span<const std::string> feature_names) const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["steps"] = steps;
  j["lr"] = lr;
  j["train"] = {{"loss_rnn_afs", train.loss_rnn_afs},
                {"loss_mod", train.loss_mod},
                {"loss_amn", train.loss_amn}};
  j["val"] = {{"loss_rnn_afs", val.loss_rnn_afs},
              {"loss_mod", val.loss_mod},
              {"loss_amn", val.loss_amn}};
  j["selection_frozen"] = selection_frozen;
  std::vector<double> w(mean_weights.data(), mean_weights.data() + mean_weights.size());
  j["feature_weights"] = feature_weights_json(feature_names, w);
  return j;
}

FitResult fit(AmnModel& model, const SeriesDataset& train, const SeriesDataset& val,
              const TrainConfig& cfg, std::ostream* history) {
  cfg.validate();
  if (train.size() == 0) throw DataError("training split has no samples");
  if (val.size() == 0) throw DataError("validation split has no samples");
  if (train.features() != model.features() || val.features() != model.features()) {
    throw ContractError("dataset feature count does not match the model");
  }
  const Task task = model.config().task;
  const Index n = train.size();
  const Index batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const Index total_steps = batches_per_epoch * cfg.epochs;

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  FitResult result;
  double best = std::numeric_limits<double>::infinity();
  std::optional<AmnModel::Snapshot> best_state;
  int since_best = 0;
  Index step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossReport sum;
    double lr = 0.0;
    for (Index b = 0; b < batches_per_epoch; ++b) {
      const Index start = b * cfg.batch_size;
      const Index len = std::min(cfg.batch_size, n - start);
      RowMatrix x(len, train.features());
      Vector y(len);
      for (Index i = 0; i < len; ++i) {
        const Index row = order[static_cast<std::size_t>(start + i)];
        x.row(i) = train.inputs.row(row);
        y[i] = train.targets[row];
      }
      const ParameterList params = model.parameters();
      for (const auto& p : params) Tensor(p.tensor).zero_grad();
      const ModelOutput out = model.forward(x, true, rng);
      const JointLoss loss = joint_loss(out, y, task);
      if (!std::isfinite(loss.report.loss_amn)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step) +
                           " (epoch " + std::to_string(epoch) + ")");
      }
      backward(loss.total);
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      lr = cosine_warmup_lr(step, total_steps, cfg.initial_lr, cfg.warmup_fraction);
      adam.step(params, lr);
      ++step;
      const double w = static_cast<double>(len);
      sum.loss_rnn_afs += w * loss.report.loss_rnn_afs;
      sum.loss_mod += w * loss.report.loss_mod;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = step;
    rec.lr = lr;
    rec.train.loss_rnn_afs = sum.loss_rnn_afs / static_cast<double>(n);
    rec.train.loss_mod = sum.loss_mod / static_cast<double>(n);
    rec.train.loss_amn = rec.train.loss_rnn_afs + rec.train.loss_mod;

    model.set_mean_weights(mean_feature_weights(model, train.inputs));
    if (!model.selection() && epoch == cfg.selection_epoch) {
      model.freeze_selection();
      // Earlier states have a different module set; tracking restarts here.
      best = std::numeric_limits<double>::infinity();
      best_state.reset();
      since_best = 0;
    }
    rec.selection_frozen = model.selection().has_value();
    rec.mean_weights = model.mean_weights();
    rec.val = evaluate_loss(model, val);
    if (!std::isfinite(rec.val.loss_amn)) {
      throw NumericError("non-finite validation loss after epoch " + std::to_string(epoch));
    }
    if (history) *history << rec.to_json(model.feature_names()).dump() << '\n';

    bool stop = false;
    if (rec.val.loss_amn < best) {
      best = rec.val.loss_amn;
      best_state = model.snapshot();
      result.best_epoch = epoch;
      result.best_val = rec.val;
      since_best = 0;
    } else if (rec.selection_frozen && ++since_best > cfg.patience) {  // patience starts at the freeze
      stop = true;
    }
    result.history.push_back(std::move(rec));
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  if (best_state) model.restore(*best_state);
  return result;
}

}  // namespace amn
