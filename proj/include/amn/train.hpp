// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/data.hpp"
#include "amn/model.hpp"
#include "amn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace amn {

/// Every training and architecture knob. Unknown JSON keys are rejected.
struct TrainConfig {
  double initial_lr = 2e-3;
  double warmup_fraction = 0.05;
  Index batch_size = 128;
  int epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  double rnn_dropout = 0.0;
  double module_dropout = 0.0;
  double output_dropout = 0.0;
  Index rnn_hidden = 64;
  Index d_model = 32;
  Index num_heads = 4;
  Index module_h1 = 64;
  Index module_h2 = 32;
  /// Unset: min(10, flattened feature count).
  std::optional<Index> n_features;
  int selection_epoch = 1;
  RnnKind rnn = RnnKind::kLstm;
  UnitKind unit = UnitKind::kAnb;
  Task task = Task::kRegression;
  /// Global gradient-norm ceiling; 0 disables clipping.
  double grad_clip = 5.0;

  void validate() const;
  ModelConfig model_config(Index window, Index channels) const;
  nlohmann::json to_json() const;
  /// Starts from `base` and overrides the keys present in `j`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

struct LossReport {
  double loss_rnn_afs = 0.0;
  double loss_mod = 0.0;
  double loss_amn = 0.0;  // loss_rnn_afs + loss_mod

  nlohmann::json to_json() const;
};

/// Mean squared error; ContractError for empty or mismatched inputs.
Tensor mse(const Tensor& prediction, const Tensor& target);
double mse(std::span<const double> y, std::span<const double> yhat);
/// Mean binary cross-entropy of logits in the stable logit form.
Tensor bce_logits(const Tensor& logits, const Tensor& target);
double bce_logits(std::span<const double> y, std::span<const double> z);

struct JointLoss {
  Tensor total;  // scalar, differentiable
  LossReport report;
};

/// Task loss of the auxiliary head plus task loss of the ensemble output.
JointLoss joint_loss(const ModelOutput& out, const Vector& targets, Task task);
LossReport joint_loss_values(std::span<const double> aux, std::span<const double> prediction,
                             std::span<const double> targets, Task task);

/// Number of warm-up steps for a run of `total_steps`.
Index warmup_steps(Index total_steps, double warmup_fraction);
/// Linear ramp from 0 to initial_lr over the warm-up steps, then cosine decay
/// that reaches 0 at step total_steps - 1.
double cosine_warmup_lr(Index step, Index total_steps, double initial_lr, double warmup_fraction);

/// Adam with bias correction. State is keyed by parameter name so that a
/// parameter keeps its moments when others are dropped.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  /// Parameters without a gradient are left untouched.
  void step(const ParameterList& params, double lr);

 private:
  struct Moments {
    Vector m;
    Vector v;
    long t = 0;
  };
  double beta1_;
  double beta2_;
  double epsilon_;
  std::map<std::string, Moments> state_;
};

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

/// Losses of `model` in evaluation mode over a whole dataset.
LossReport evaluate_loss(const AmnModel& model, const SeriesDataset& ds);

struct EpochRecord {
  int epoch = 0;
  Index steps = 0;  // optimizer steps taken so far
  double lr = 0.0;  // rate of the epoch's last step
  LossReport train;
  LossReport val;
  bool selection_frozen = false;
  Vector mean_weights;

  nlohmann::ordered_json to_json(std::span<const std::string> feature_names) const;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  LossReport best_val;
  bool early_stopped = false;
};

/// Joint training with seeded shuffling, scheduled Adam, selection freeze
/// after `selection_epoch` and early stopping on the validation loss_amn. The
/// best validation state (after the freeze) is restored into `model`.
/// Writes one JSON line per epoch to `history` when given. A non-finite
/// loss raises NumericError naming the step.
FitResult fit(AmnModel& model, const SeriesDataset& train, const SeriesDataset& val,
              const TrainConfig& cfg, std::ostream* history = nullptr);

}  // namespace amn
