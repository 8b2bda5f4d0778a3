// SPDX-License-Identifier: Apache-2.0
#include "amn/model.hpp"

#include "amn/error.hpp"
#include "amn/ops.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace amn {

std::string to_string(RnnKind kind) { return kind == RnnKind::kLstm ? "lstm" : "gru"; }

RnnKind parse_rnn_kind(std::string_view text) {
  if (text == "lstm") return RnnKind::kLstm;
  if (text == "gru") return RnnKind::kGru;
  throw ConfigError("unknown rnn kind '" + std::string(text) + "' (expected lstm or gru)");
}

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(v));
  };
  positive(window, "window");
  positive(channels, "channels");
  positive(rnn_hidden, "rnn_hidden");
  positive(d_model, "d_model");
  positive(num_heads, "num_heads");
  positive(module_h1, "module_hidden[0]");
  positive(module_h2, "module_hidden[1]");
  positive(n_features, "n_features");
  if (d_model % num_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                      std::to_string(num_heads) + ")");
  }
  if (n_features > features()) {
    throw ConfigError("n_features (" + std::to_string(n_features) + ") exceeds the " +
                      std::to_string(features()) + " flattened input features");
  }
  check_dropout_rate(rnn_dropout, "rnn dropout rate");
  check_dropout_rate(module_dropout, "module dropout rate");
  check_dropout_rate(output_dropout, "output dropout rate");
  if (!(layer_norm_epsilon > 0.0)) throw ConfigError("layer norm epsilon must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["rnn"] = to_string(rnn);
  j["unit"] = to_string(unit);
  j["window"] = window;
  j["channels"] = channels;
  j["rnn_hidden"] = rnn_hidden;
  j["d_model"] = d_model;
  j["num_heads"] = num_heads;
  j["module_hidden"] = {module_h1, module_h2};
  j["n_features"] = n_features;
  j["rnn_dropout"] = rnn_dropout;
  j["module_dropout"] = module_dropout;
  j["output_dropout"] = output_dropout;
  j["layer_norm_epsilon"] = layer_norm_epsilon;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.task = parse_task(j.at("task").get<std::string>());
  c.rnn = parse_rnn_kind(j.at("rnn").get<std::string>());
  c.unit = parse_unit_kind(j.at("unit").get<std::string>());
  c.window = j.at("window").get<Index>();
  c.channels = j.at("channels").get<Index>();
  c.rnn_hidden = j.at("rnn_hidden").get<Index>();
  c.d_model = j.at("d_model").get<Index>();
  c.num_heads = j.at("num_heads").get<Index>();
  c.module_h1 = j.at("module_hidden").at(0).get<Index>();
  c.module_h2 = j.at("module_hidden").at(1).get<Index>();
  c.n_features = j.at("n_features").get<Index>();
  c.rnn_dropout = j.at("rnn_dropout").get<double>();
  c.module_dropout = j.at("module_dropout").get<double>();
  c.output_dropout = j.at("output_dropout").get<double>();
  c.layer_norm_epsilon = j.at("layer_norm_epsilon").get<double>();
  c.validate();
  return c;
}

TokenParams TokenParams::xavier(Index features, Index rnn_hidden, Index d_model, Rng& rng) {
  TokenParams p;
  p.value = xavier_uniform({1, d_model}, 1, d_model, rng);
  p.hidden = xavier_uniform({rnn_hidden, d_model}, rnn_hidden, d_model, rng);
  p.bias = Tensor::zeros({d_model}, true);
  p.embedding = xavier_uniform({features, d_model}, 1, d_model, rng);
  return p;
}

void TokenParams::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".value", value});
  out.push_back({prefix + ".hidden", hidden});
  out.push_back({prefix + ".bias", bias});
  out.push_back({prefix + ".embedding", embedding});
}

Tensor feature_tokens(const Tensor& x, const Tensor& h_last, const TokenParams& p) {
  const Index batch = x.dim(0);
  const Index features = x.dim(1);
  const Index d_model = p.value.dim(1);
  if (p.embedding.dim(0) != features) {
    throw ContractError("token embedding has " + std::to_string(p.embedding.dim(0)) +
                        " rows for " + std::to_string(features) + " features");
  }
  Tensor own = matmul(reshape(x, {batch, features, 1}), p.value);  // [B, D, d_model]
  Tensor context = reshape(matmul(h_last, p.hidden) + p.bias, {batch, 1, d_model});
  return own + context + p.embedding;
}

Tensor encode(const RowMatrix& inputs, Index window, Index channels, RnnKind kind,
              const LstmParams& lstm, const GruParams& gru, const LayerNormParams& norm,
              double dropout_rate, bool training, Rng& rng) {
  const Index batch = inputs.rows();
  const Index hidden = kind == RnnKind::kLstm ? lstm.hidden() : gru.hidden();
  Tensor h = Tensor::zeros({batch, hidden});
  Tensor c = Tensor::zeros({batch, hidden});
  for (Index t = 0; t < window; ++t) {
    Tensor x_t = Tensor::from_matrix(inputs.middleCols(t * channels, channels));
    if (kind == RnnKind::kLstm) {
      LstmState s = lstm_step(x_t, h, c, lstm);
      h = std::move(s.h);
      c = std::move(s.c);
    } else {
      h = gru_step(x_t, h, gru);
    }
  }
  return dropout(layer_norm(h, norm), dropout_rate, training, rng);
}

AmnModel AmnModel::init(const ModelConfig& config, std::vector<std::string> feature_names,
                        std::uint64_t seed) {
  config.validate();
  const Index d = config.features();
  if (static_cast<Index>(feature_names.size()) != d) {
    throw ContractError("model expects " + std::to_string(d) + " feature names, got " +
                        std::to_string(feature_names.size()));
  }
  Rng rng(seed);
  AmnModel m;
  m.config_ = config;
  m.feature_names_ = std::move(feature_names);
  if (config.rnn == RnnKind::kLstm) {
    m.lstm_ = LstmParams::xavier(config.channels, config.rnn_hidden, rng);
  } else {
    m.gru_ = GruParams::xavier(config.channels, config.rnn_hidden, rng);
  }
  m.norm_ = LayerNormParams::identity(config.rnn_hidden, config.layer_norm_epsilon);
  m.tokens_ = TokenParams::xavier(d, config.rnn_hidden, config.d_model, rng);
  m.afs_ = AfsParams::xavier(d, config.d_model, config.num_heads, rng);
  for (Index j = 0; j < d; ++j) {
    m.ensemble_.modules.push_back(FeatureModule::init(config.unit, config.module_h1,
                                                      config.module_h2, config.module_dropout, rng));
    m.active_.push_back(j);
  }
  m.ensemble_.beta = Tensor::scalar(0.0, true);
  m.ensemble_.output_dropout = config.output_dropout;
  m.mean_weights_ = Vector::Constant(d, 1.0 / static_cast<double>(d));
  return m;
}

ModelOutput AmnModel::forward(const RowMatrix& inputs, bool training, Rng& rng) const {
  const Index d = features();
  if (inputs.rows() < 1 || inputs.cols() != d) {
    throw ContractError("model expects [batch, " + std::to_string(d) + "] inputs (window " +
                        std::to_string(config_.window) + " x " + std::to_string(config_.channels) +
                        " channels), got [" + std::to_string(inputs.rows()) + ", " +
                        std::to_string(inputs.cols()) + "]");
  }
  const Index batch = inputs.rows();
  const auto n = static_cast<Index>(active_.size());

  Tensor h = encode(inputs, config_.window, config_.channels, config_.rnn, lstm_, gru_, norm_,
                    config_.rnn_dropout, training, rng);
  Tensor r = feature_tokens(Tensor::from_matrix(inputs), h, tokens_);
  AfsOutput a = afs_forward(r, afs_);

  RowMatrix xs(batch, n);
  for (Index k = 0; k < n; ++k) xs.col(k) = inputs.col(active_[static_cast<std::size_t>(k)]);

  Tensor f;
  if (config_.unit == UnitKind::kAnb) {
    if (training) {
      Tensor batch_mean = mean(a.weights, 0);
      bool identity = n == d;
      for (Index k = 0; identity && k < n; ++k) identity = active_[static_cast<std::size_t>(k)] == k;
      if (identity) {
        f = batch_mean;
      } else {
        std::vector<Tensor> parts;
        for (Index j : active_) parts.push_back(slice(batch_mean, 0, j, 1));
        f = concat(parts, 0);
      }
    } else {
      f = stored_unit_weights();
    }
  }
  EnsembleOutput e = ensemble_forward(Tensor::from_matrix(xs), ensemble_, f, training, rng);

  ModelOutput out;
  out.prediction = std::move(e.prediction);
  out.aux_prediction = reshape(a.aux_prediction, {batch});
  out.feature_weights = std::move(a.weights);
  out.contributions = std::move(e.contributions);
  out.beta = e.beta;
  out.active = active_;
  return out;
}

ModelOutput AmnModel::evaluate(const RowMatrix& inputs) const {
  Rng unused(0);
  return forward(inputs, false, unused);
}

Tensor AmnModel::stored_unit_weights() const {
  const auto n = static_cast<Index>(active_.size());
  Vector v(n);
  for (Index k = 0; k < n; ++k) v[k] = mean_weights_[active_[static_cast<std::size_t>(k)]];
  return Tensor({n}, std::move(v));
}

EnsembleOutput AmnModel::module_outputs(const RowMatrix& selected) const {
  const auto n = static_cast<Index>(active_.size());
  if (selected.rows() < 1 || selected.cols() != n) {
    throw ContractError("module outputs expect [batch, " + std::to_string(n) + "] inputs");
  }
  Rng unused(0);
  const Tensor f = config_.unit == UnitKind::kAnb ? stored_unit_weights() : Tensor();
  return ensemble_forward(Tensor::from_matrix(selected), ensemble_, f, false, unused);
}

RowMatrix AmnModel::feature_weights(const RowMatrix& inputs) const {
  if (inputs.rows() < 1 || inputs.cols() != features()) {
    throw ContractError("feature weights expect [batch, " + std::to_string(features()) + "] inputs");
  }
  Rng unused(0);
  Tensor h = encode(inputs, config_.window, config_.channels, config_.rnn, lstm_, gru_, norm_,
                    config_.rnn_dropout, false, unused);
  return afs_forward(feature_tokens(Tensor::from_matrix(inputs), h, tokens_), afs_).weights.matrix();
}

void AmnModel::set_mean_weights(const Vector& weights) {
  if (weights.size() != features()) {
    throw ContractError("expected " + std::to_string(features()) + " feature weights, got " +
                        std::to_string(weights.size()));
  }
  mean_weights_ = weights;
}

void AmnModel::apply_selection(std::vector<Index> order) {
  std::vector<FeatureModule> modules;
  for (Index j : order) modules.push_back(ensemble_.modules[static_cast<std::size_t>(module_index(j))]);
  ensemble_.modules = std::move(modules);
  active_ = order;
  selection_ = std::move(order);
}

void AmnModel::freeze_selection() {
  if (selection_) throw ContractError("feature selection is already frozen");
  std::vector<double> w(mean_weights_.data(), mean_weights_.data() + mean_weights_.size());
  apply_selection(select_top_n(w, config_.n_features));
}

Index AmnModel::module_index(Index feature) const {
  const auto it = std::find(active_.begin(), active_.end(), feature);
  if (it == active_.end()) {
    std::string names;
    for (Index j : active_) {
      if (!names.empty()) names += ", ";
      names += feature_names_[static_cast<std::size_t>(j)];
    }
    const std::string name = feature >= 0 && feature < features()
                                 ? feature_names_[static_cast<std::size_t>(feature)]
                                 : std::to_string(feature);
    throw ContractError("feature '" + name + "' is not selected; selected features: " + names);
  }
  return static_cast<Index>(it - active_.begin());
}

const FeatureModule& AmnModel::module_for(Index feature) const {
  return ensemble_.modules[static_cast<std::size_t>(module_index(feature))];
}

ParameterList AmnModel::parameters() const {
  ParameterList out;
  if (config_.rnn == RnnKind::kLstm) {
    lstm_.collect("rnn.lstm", out);
  } else {
    gru_.collect("rnn.gru", out);
  }
  norm_.collect("rnn.norm", out);
  tokens_.collect("tokens", out);
  afs_.collect("afs", out);
  for (std::size_t k = 0; k < active_.size(); ++k) {
    ensemble_.modules[k].collect("module." + std::to_string(active_[k]), out);
  }
  ensemble_.collect("ensemble", out);
  return out;
}

AmnModel::Snapshot AmnModel::snapshot() const {
  Snapshot s;
  for (const auto& p : parameters()) s.params[p.name] = p.tensor.values();
  s.mean_weights = mean_weights_;
  return s;
}

void AmnModel::restore(const Snapshot& s) {
  const ParameterList params = parameters();
  if (params.size() != s.params.size()) {
    throw ContractError("snapshot does not match the model's parameter set");
  }
  for (const auto& p : params) {
    const auto it = s.params.find(p.name);
    if (it == s.params.end() || it->second.size() != p.tensor.size()) {
      throw ContractError("snapshot does not match parameter " + p.name);
    }
    Tensor t = p.tensor;
    t.values() = it->second;
  }
  mean_weights_ = s.mean_weights;
}

nlohmann::json AmnModel::to_json() const {
  nlohmann::json j;
  j["config"] = config_.to_json();
  j["feature_names"] = feature_names_;
  j["selection"] = selection_ ? nlohmann::json(*selection_) : nlohmann::json(nullptr);
  j["mean_weights"] = std::vector<double>(mean_weights_.data(),
                                          mean_weights_.data() + mean_weights_.size());
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& p : parameters()) {
    const Vector& v = p.tensor.values();
    params.push_back({{"name", p.name},
                      {"shape", p.tensor.shape()},
                      {"values", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  return j;
}

AmnModel AmnModel::from_json(const nlohmann::json& j) {
  const ModelConfig config = ModelConfig::from_json(j.at("config"));
  AmnModel m = init(config, j.at("feature_names").get<std::vector<std::string>>(), 0);
  const auto weights = j.at("mean_weights").get<std::vector<double>>();
  if (static_cast<Index>(weights.size()) != m.features()) {
    throw DataError("checkpoint feature weights do not match the feature count");
  }
  m.mean_weights_ = Eigen::Map<const Vector>(weights.data(), m.features());
  if (!j.at("selection").is_null()) {
    const auto order = j["selection"].get<std::vector<Index>>();
    if (static_cast<Index>(order.size()) != config.n_features) {
      throw DataError("checkpoint selection has the wrong length");
    }
    m.apply_selection(order);
  }
  ParameterList params = m.parameters();
  const auto& stored = j.at("parameters");
  if (stored.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = stored[i];
    if (s.at("name").get<std::string>() != params[i].name ||
        s.at("shape").get<Shape>() != params[i].tensor.shape()) {
      throw DataError("checkpoint parameter " + s.at("name").get<std::string>() +
                      " does not match model parameter " + params[i].name);
    }
    const auto values = s.at("values").get<std::vector<double>>();
    if (static_cast<Index>(values.size()) != params[i].tensor.size()) {
      throw DataError("checkpoint parameter " + params[i].name + " has the wrong size");
    }
    params[i].tensor.values() = Eigen::Map<const Vector>(values.data(), params[i].tensor.size());
  }
  return m;
}

Vector predict_raw(const AmnModel& model, const RowMatrix& inputs) {
  constexpr Index kChunk = 512;
  NoGradScope no_grad;
  Vector out(inputs.rows());
  for (Index start = 0; start < inputs.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.rows() - start);
    const ModelOutput o = model.evaluate(inputs.middleRows(start, len));
    out.segment(start, len) = o.prediction.values();
  }
  return out;
}

Vector mean_feature_weights(const AmnModel& model, const RowMatrix& inputs) {
  constexpr Index kChunk = 512;
  if (inputs.rows() == 0) throw ContractError("mean feature weights of an empty dataset");
  NoGradScope no_grad;
  Vector total = Vector::Zero(model.features());
  for (Index start = 0; start < inputs.rows(); start += kChunk) {
    const Index len = std::min(kChunk, inputs.rows() - start);
    total += model.feature_weights(inputs.middleRows(start, len)).colwise().sum().transpose();
  }
  return total / static_cast<double>(inputs.rows());
}

Vector predict(const AmnModel& model, const SeriesDataset& ds, const DataManifest& manifest) {
  if (ds.feature_names != model.feature_names()) {
    throw DataError("dataset features do not match the model's normalization metadata");
  }
  Vector y = predict_raw(model, ds.inputs);
  if (model.config().task == Task::kClassification) {
    for (Index i = 0; i < y.size(); ++i) {
      y[i] = y[i] >= 0 ? 1.0 / (1.0 + std::exp(-y[i])) : std::exp(y[i]) / (1.0 + std::exp(y[i]));
    }
  } else if (manifest.norm.target) {
    for (Index i = 0; i < y.size(); ++i) y[i] = manifest.norm.target->denormalize(y[i]);
  }
  return y;
}

namespace {
constexpr const char* kCheckpointFormat = "amn-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

nlohmann::json checkpoint_json(const AmnModel& model, const DataManifest& manifest) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model"] = model.to_json();
  j["manifest"] = manifest.to_json();
  return j;
}

void save_checkpoint(const std::filesystem::path& path, const AmnModel& model,
                     const DataManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << checkpoint_json(model, manifest).dump() << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", std::string{}) != kCheckpointFormat) {
    throw VersionError(path.string() + " is not an AMN checkpoint");
  }
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint " + path.string() + " has version " + std::to_string(version) +
                       "; this build reads version " + std::to_string(kCheckpointVersion));
  }
  return {AmnModel::from_json(j.at("model")), DataManifest::from_json(j.at("manifest"))};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string checkpoint_hash(const nlohmann::json& checkpoint) {
  return sha256_hex(checkpoint.dump());
}

}  // namespace amn
