// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/afs.hpp"
#include "amn/data.hpp"
#include "amn/layers.hpp"
#include "amn/modular.hpp"
#include "amn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace amn {

enum class RnnKind { kLstm, kGru };
std::string to_string(RnnKind kind);
RnnKind parse_rnn_kind(std::string_view text);

/// Architecture of one model. `window` and `channels` come from the data;
/// the flattened feature count is window * channels.
struct ModelConfig {
  Task task = Task::kRegression;
  RnnKind rnn = RnnKind::kLstm;
  UnitKind unit = UnitKind::kAnb;
  Index window = 1;
  Index channels = 1;
  Index rnn_hidden = 64;
  Index d_model = 32;
  Index num_heads = 4;
  Index module_h1 = 64;
  Index module_h2 = 32;
  Index n_features = 10;
  double rnn_dropout = 0.0;
  double module_dropout = 0.0;
  double output_dropout = 0.0;
  double layer_norm_epsilon = 1e-5;

  Index features() const { return window * channels; }
  /// Throws ConfigError for out-of-range values.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Maps every flattened feature to a d_model token for attention:
/// token_j = x_j * value + h_T hidden + bias + embedding_j. The shared part
/// carries the encoder's temporal context, the per-feature embedding lets
/// attention tell features apart.
struct TokenParams {
  Tensor value;      // [1, d_model]
  Tensor hidden;     // [rnn_hidden, d_model]
  Tensor bias;       // [d_model]
  Tensor embedding;  // [features, d_model]

  static TokenParams xavier(Index features, Index rnn_hidden, Index d_model, Rng& rng);
  void collect(const std::string& prefix, ParameterList& out) const;
};

/// x [B, D] flattened inputs, h_last [B, H] -> tokens [B, D, d_model].
Tensor feature_tokens(const Tensor& x, const Tensor& h_last, const TokenParams& p);

struct ModelOutput {
  Tensor prediction;      // [B], pre-link
  Tensor aux_prediction;  // [B], pre-link
  Tensor feature_weights; // [B, D], live F of every sample
  Tensor contributions;   // [B, n]
  double beta = 0.0;
  std::vector<Index> active;  // feature index of each contribution column
};

class AmnModel {
 public:
  static AmnModel init(const ModelConfig& config, std::vector<std::string> feature_names,
                       std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  Index features() const { return config_.features(); }

  /// inputs [B, window * channels] with feature j = lag * channels + channel.
  /// Training mode scales ANB units by the batch-mean live F and applies
  /// dropout; evaluation mode uses the stored mean of F over the training
  /// data, so a module depends on nothing but its own input.
  ModelOutput forward(const RowMatrix& inputs, bool training, Rng& rng) const;
  /// Evaluation-mode forward; reuses an internal generator that is never read.
  ModelOutput evaluate(const RowMatrix& inputs) const;
  /// Evaluation-mode ensemble over values of the active features only
  /// (selected [B, n], column k feeding module k).
  EnsembleOutput module_outputs(const RowMatrix& selected) const;
  /// Evaluation-mode live F [B, D] without running the modules.
  RowMatrix feature_weights(const RowMatrix& inputs) const;

  /// Features currently feeding the ensemble, in module order.
  const std::vector<Index>& active() const { return active_; }
  const std::optional<std::vector<Index>>& selection() const { return selection_; }
  /// Keeps only the modules of the top-n features by mean F, in descending
  /// weight order.
  void freeze_selection();
  /// Mean of F over the training data; uniform until first set.
  const Vector& mean_weights() const { return mean_weights_; }
  void set_mean_weights(const Vector& weights);

  const ModularEnsemble& ensemble() const { return ensemble_; }
  const FeatureModule& module_for(Index feature) const;
  /// Module position of `feature`; ContractError naming the active features
  /// when it has no module.
  Index module_index(Index feature) const;

  ParameterList parameters() const;
  /// Deep copy of every parameter value and the running mean of F.
  struct Snapshot {
    std::map<std::string, Vector> params;
    Vector mean_weights;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

  nlohmann::json to_json() const;
  static AmnModel from_json(const nlohmann::json& j);

 private:
  void apply_selection(std::vector<Index> order);
  Tensor stored_unit_weights() const;

  ModelConfig config_;
  std::vector<std::string> feature_names_;
  LstmParams lstm_;
  GruParams gru_;
  LayerNormParams norm_;
  TokenParams tokens_;
  AfsParams afs_;
  ModularEnsemble ensemble_;
  std::vector<Index> active_;
  std::optional<std::vector<Index>> selection_;
  Vector mean_weights_;
};

/// Final normalized hidden state [B, H] of the encoder for inputs [B, T*d].
Tensor encode(const RowMatrix& inputs, Index window, Index channels, RnnKind kind,
              const LstmParams& lstm, const GruParams& gru, const LayerNormParams& norm,
              double dropout_rate, bool training, Rng& rng);

/// Probabilities (classification) or original-unit values (regression).
Vector predict(const AmnModel& model, const SeriesDataset& ds, const DataManifest& manifest);
/// Pre-link predictions in model units, evaluated in batches.
Vector predict_raw(const AmnModel& model, const RowMatrix& inputs);
/// Evaluation-mode mean of F over the rows of `inputs`.
Vector mean_feature_weights(const AmnModel& model, const RowMatrix& inputs);

// Checkpoint: one JSON document holding the model and the data manifest.
nlohmann::json checkpoint_json(const AmnModel& model, const DataManifest& manifest);
void save_checkpoint(const std::filesystem::path& path, const AmnModel& model,
                     const DataManifest& manifest);
struct LoadedCheckpoint {
  AmnModel model;
  DataManifest manifest;
};
/// IoError when unreadable, VersionError for an unknown format or version.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
/// Hex SHA-256 of the serialized checkpoint.
std::string checkpoint_hash(const nlohmann::json& checkpoint);
std::string sha256_hex(std::string_view bytes);

}  // namespace amn
