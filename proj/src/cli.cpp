// SPDX-License-Identifier: Apache-2.0
#include "amn/cli.hpp"

#include "amn/error.hpp"
#include "amn/gradient_suite.hpp"
#include "amn/metrics.hpp"
#include "amn/model.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace amn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

std::shared_ptr<spdlog::logger> log() {
  static auto logger = [] {
    auto l = spdlog::stderr_logger_mt("amn");
    l->set_pattern("[%l] %v");
    auto level = spdlog::level::info;
    if (const char* env = std::getenv("AMN_LOG"); env && *env) {
      const std::string name = env;
      const auto parsed = spdlog::level::from_str(name);
      if (parsed != spdlog::level::off || name == "off") {
        level = parsed;
      } else {
        l->warn("AMN_LOG='{}' is not a level (trace, debug, info, warn, error, off); using info",
                name);
      }
    }
    l->set_level(level);
    return l;
  }();
  return logger;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown " + where + " key '" + key + "'");
  }
}

json read_json_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError(what + " not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::pair<RnnKind, UnitKind> parse_arm(const std::string& arm) {
  const auto slash = arm.find('/');
  if (slash == std::string::npos) {
    throw ConfigError("arm '" + arm + "' must look like <rnn>/<unit>, e.g. lstm/anb");
  }
  return {parse_rnn_kind(arm.substr(0, slash)), parse_unit_kind(arm.substr(slash + 1))};
}

std::string target_of(const DataSource& d) {
  if (!d.spec.target.empty()) return d.spec.target;
  return d.synthetic ? "y" : "";
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Test metrics in original units. Metrics without a defined value are
// dropped with a warning rather than failing a finished run.
MetricReport report_for(const AmnModel& model, const SeriesDataset& ds, const SeriesDataset& train,
                        const DataManifest& manifest) {
  const Vector p = predict(model, ds, manifest);
  const Vector y = original_targets(ds, manifest);
  std::span<const double> ys(y.data(), y.size()), ps(p.data(), p.size());
  MetricReport r;
  r.task = manifest.task;
  r.n_samples = ys.size();
  auto put = [&](const std::string& name, auto fn) {
    try {
      r.values[name] = fn();
    } catch (const UndefinedMetricError& e) {
      log()->warn("{} undefined: {}", name, e.what());
    }
  };
  if (manifest.task == Task::kRegression) {
    const Vector yt = original_targets(train, manifest);
    std::span<const double> yts(yt.data(), yt.size());
    put("smape", [&] { return smape(ys, ps); });
    put("mase", [&] { return mase(ys, ps, yts); });
    put("wape", [&] { return wape(ys, ps); });
  } else {
    put("accuracy", [&] { return accuracy(ys, ps); });
    put("f1", [&] { return f1(ys, ps); });
    put("auc", [&] { return auc(ys, ps); });
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    check_keys(j, {"version", "command", "data", "train", "out", "seeds", "explain", "arms"},
               "config");
    if (j.contains("version")) {
      c.version = j.at("version").get<int>();
      if (c.version != 1) {
        throw VersionError("config version " + std::to_string(c.version) +
                           " is not supported (expected 1)");
      }
    }
    if (j.contains("command")) c.command = j.at("command").get<std::string>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d,
                 {"csv", "schema", "synthetic", "target", "channels", "include_target", "window",
                  "fractions", "normalization"},
                 "data");
      if (d.contains("csv")) c.data.csv = resolve(base_dir, d.at("csv").get<std::string>());
      if (d.contains("synthetic")) c.data.synthetic = SyntheticSpec::from_json(d.at("synthetic"));
      if (d.contains("schema")) {
        const json& s = d.at("schema");
        if (s.is_string()) {
          c.data.schema_file = resolve(base_dir, s.get<std::string>());
          c.data.schema = CsvSchema::from_json(read_json_file(*c.data.schema_file, "schema file"));
        } else {
          c.data.schema = CsvSchema::from_json(s);
        }
      }
      if (d.contains("target")) c.data.spec.target = d.at("target").get<std::string>();
      if (d.contains("channels")) {
        c.data.spec.channels = d.at("channels").get<std::vector<std::string>>();
      }
      if (d.contains("include_target")) c.data.spec.include_target = d.at("include_target").get<bool>();
      if (d.contains("window")) c.data.spec.window = d.at("window").get<Index>();
      if (d.contains("fractions")) c.data.spec.fractions = d.at("fractions").get<std::array<double, 3>>();
      if (d.contains("normalization")) {
        c.data.spec.scheme = parse_norm_scheme(d.at("normalization").get<std::string>());
      }
    }
    if (j.contains("train")) {
      c.train = TrainConfig::from_json(j.at("train"));
      if (c.data.synthetic && !j.at("train").contains("task")) c.train.task = c.data.synthetic->task;
    } else if (c.data.synthetic) {
      c.train.task = c.data.synthetic->task;
    }
    if (j.contains("out")) c.out = resolve(base_dir, j.at("out").get<std::string>());
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<int>();
    if (j.contains("explain")) {
      const json& e = j.at("explain");
      check_keys(e, {"grid_size", "density_bins", "max_samples"}, "explain");
      if (e.contains("grid_size")) c.explain.grid_size = e.at("grid_size").get<Index>();
      if (e.contains("density_bins")) c.explain.density_bins = e.at("density_bins").get<Index>();
      if (e.contains("max_samples")) c.explain.max_samples = e.at("max_samples").get<Index>();
    }
    if (j.contains("arms")) c.arms = j.at("arms").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  json d;
  if (data.csv) d["csv"] = data.csv->string();
  if (data.synthetic) d["synthetic"] = data.synthetic->to_json();
  d["schema"] = data.schema.to_json();
  d["target"] = target_of(data);
  d["channels"] = data.spec.channels;
  d["include_target"] = data.spec.include_target;
  d["window"] = data.spec.window;
  d["fractions"] = data.spec.fractions;
  d["normalization"] = to_string(data.spec.scheme);
  json j;
  j["version"] = version;
  if (!command.empty()) j["command"] = command;
  j["data"] = d;
  j["train"] = train.to_json();
  j["out"] = out.string();
  j["seeds"] = seeds;
  j["explain"] = {{"grid_size", explain.grid_size},
                  {"density_bins", explain.density_bins},
                  {"max_samples", explain.max_samples}};
  j["arms"] = arms;
  return j;
}

void RunConfig::validate() const {
  if (seeds < 1) throw ConfigError("seeds must be at least 1");
  train.validate();
  if (data.csv && data.synthetic) throw ConfigError("data: give either csv or synthetic, not both");
  if (data.spec.window < 1) throw ConfigError("data.window must be at least 1");
  if (data.csv && data.spec.target.empty()) throw ConfigError("data.target is required for a CSV");
  if (data.synthetic && data.synthetic->task != train.task) {
    throw ConfigError("train.task (" + to_string(train.task) + ") differs from data.synthetic.task (" +
                      to_string(data.synthetic->task) + ")");
  }
  if (explain.grid_size < 2) throw ConfigError("explain.grid_size must be at least 2");
  if (explain.density_bins < 1) throw ConfigError("explain.density_bins must be at least 1");
  if (explain.max_samples < 0) throw ConfigError("explain.max_samples must be non-negative");
  if (arms.empty()) throw ConfigError("arms must not be empty");
  for (const auto& a : arms) parse_arm(a);
}

RunConfig load_run_config(const fs::path& path) {
  return RunConfig::from_json(read_json_file(path, "config file"), path.parent_path());
}

Table load_table(const DataSource& source) {
  if (source.synthetic) return generate_synthetic(*source.synthetic).table;
  if (!source.csv) throw ConfigError("no data source: pass --data <csv> or set data.csv / data.synthetic");
  if (!fs::exists(*source.csv)) throw IoError("data file not found: " + source.csv->string());
  return load_csv(*source.csv, source.schema);
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const VersionError*>(&e) || dynamic_cast<const json::exception*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const UndefinedMetricError*>(&e)) return 3;
  return 1;
}

namespace {

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const VersionError*>(&e)) return "version";
  if (dynamic_cast<const json::exception*>(&e)) return "json";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const UndefinedMetricError*>(&e)) return "metric";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  return "internal";
}

// ---------------------------------------------------------------------------
// Shared flag handling

struct RunFlags {
  std::string config;
  std::string data;
  std::string target;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::string out;
  std::optional<Index> n_features;
  std::string unit;
  std::string rnn;
  std::string task;
  std::optional<int> epochs;
  std::vector<std::string> arms;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run config (JSON)");
  cmd->add_option("--data", f.data, "CSV file; replaces the config's data source");
  cmd->add_option("--target", f.target, "Target column");
  cmd->add_option("--seed", f.seed, "Seed of the first trial");
  cmd->add_option("--seeds", f.seeds, "Number of trials");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--n-features", f.n_features, "Modules kept after selection");
  cmd->add_option("--unit", f.unit, "Module unit")->check(CLI::IsMember({"anb", "linear", "exu"}));
  cmd->add_option("--rnn", f.rnn, "Encoder")->check(CLI::IsMember({"lstm", "gru"}));
  cmd->add_option("--task", f.task, "Task")->check(CLI::IsMember({"regression", "classification"}));
  cmd->add_option("--epochs", f.epochs, "Maximum epochs");
}

RunConfig build_config(const RunFlags& f, const std::string& command) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  c.command = command;
  if (!f.data.empty()) {
    c.data.csv = fs::path(f.data);
    c.data.synthetic.reset();
  }
  if (!f.target.empty()) c.data.spec.target = f.target;
  if (f.seed) c.train.seed = *f.seed;
  if (f.seeds) c.seeds = *f.seeds;
  if (!f.out.empty()) c.out = f.out;
  if (f.n_features) c.train.n_features = *f.n_features;
  if (!f.unit.empty()) c.train.unit = parse_unit_kind(f.unit);
  if (!f.rnn.empty()) c.train.rnn = parse_rnn_kind(f.rnn);
  if (!f.task.empty()) {
    c.train.task = parse_task(f.task);
    if (c.data.synthetic) c.data.synthetic->task = c.train.task;
  }
  if (f.epochs) c.train.epochs = *f.epochs;
  if (!f.arms.empty()) c.arms = f.arms;
  c.validate();
  return c;
}

PreparedData prepare(const RunConfig& c) {
  const Table table = load_table(c.data);
  DataSpec spec = c.data.spec;
  spec.target = target_of(c.data);
  PreparedData prep = prepare_data(table, c.data.schema, spec, c.train.task);
  log()->info("data: {} train / {} val / {} test samples, {} features", prep.train.size(),
              prep.val.size(), prep.test.size(), prep.train.features());
  for (const auto& w : prep.manifest.norm.warnings) log()->warn("{}", w);
  return prep;
}

AmnModel train_model(const TrainConfig& cfg, const PreparedData& prep, FitResult& result,
                     std::ostream* history) {
  AmnModel model = AmnModel::init(cfg.model_config(prep.train.window, prep.train.channels()),
                                  prep.train.feature_names, cfg.seed);
  result = fit(model, prep.train, prep.val, cfg, history);
  for (const auto& r : result.history) {
    log()->debug("seed {} epoch {} lr {:.3g} train {:.5f} val {:.5f}{}", cfg.seed, r.epoch, r.lr,
                 r.train.loss_amn, r.val.loss_amn, r.selection_frozen ? "" : " (selecting)");
  }
  return model;
}

// ---------------------------------------------------------------------------
// train

json train_trial(const RunConfig& c, const PreparedData& prep, std::uint64_t seed,
                 const fs::path& dir) {
  ensure_dir(dir);
  TrainConfig cfg = c.train;
  cfg.seed = seed;
  FitResult result;
  std::ostringstream history;
  AmnModel model = train_model(cfg, prep, result, &history);
  write_text(dir / "history.jsonl", history.str());

  const json ck = checkpoint_json(model, prep.manifest);
  write_text(dir / "checkpoint.json", ck.dump() + "\n");
  const std::string hash = checkpoint_hash(ck);

  std::vector<std::string> selected;
  for (Index j : model.active()) selected.push_back(model.feature_names()[j]);

  RunConfig trial = c;
  trial.train.seed = seed;
  trial.seeds = 1;
  json manifest;
  manifest["format"] = "amn-run";
  manifest["version"] = 1;
  manifest["config"] = trial.to_json();
  manifest["config"].erase("out");  // the manifest sits in the output directory
  manifest["data"] = prep.manifest.to_json();
  manifest["checkpoint"] = "checkpoint.json";
  manifest["checkpoint_sha256"] = hash;
  manifest["selected"] = selected;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  const MetricReport report = report_for(model, prep.test, prep.train, prep.manifest);
  const LossReport test_loss = evaluate_loss(model, prep.test);
  json metrics;
  metrics["seed"] = seed;
  metrics["test"] = report.to_json();
  metrics["test_loss"] = test_loss.to_json();
  metrics["best_epoch"] = result.best_epoch;
  metrics["epochs_run"] = result.history.size();
  metrics["early_stopped"] = result.early_stopped;
  metrics["best_val"] = result.best_val.to_json();
  metrics["checkpoint_sha256"] = hash;
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");

  log()->info("seed {}: best epoch {} of {}, test loss {:.5f}, checkpoint {}", seed,
              result.best_epoch, result.history.size(), test_loss.loss_mod, hash.substr(0, 12));
  return metrics;
}

int cmd_train(const RunFlags& f) {
  const RunConfig c = build_config(f, "train");
  const PreparedData prep = prepare(c);
  ensure_dir(c.out);
  if (c.seeds == 1) {
    const json m = train_trial(c, prep, c.train.seed, c.out);
    std::cout << MetricReport::from_json(m.at("test")).table();
    std::cout << "checkpoint " << (c.out / "checkpoint.json").string() << " sha256 "
              << m.at("checkpoint_sha256").get<std::string>() << "\n";
    return 0;
  }

  std::vector<json> trials;
  std::map<std::string, std::vector<double>> values;
  for (int s = 0; s < c.seeds; ++s) {
    const std::uint64_t seed = c.train.seed + static_cast<std::uint64_t>(s);
    trials.push_back(train_trial(c, prep, seed, c.out / ("seed-" + std::to_string(seed))));
    for (const auto& [k, v] : trials.back().at("test").at("metrics").items()) {
      values[k].push_back(v.get<double>());
    }
    values["test_loss"].push_back(trials.back().at("test_loss").at("loss_mod").get<double>());
  }
  json mean, stdev;
  std::cout << fmt::format("{:<10} {:>12} {:>12}\n", "metric", "mean", "std");
  for (const auto& [k, v] : values) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    mean[k] = m;
    stdev[k] = sd;
    std::cout << fmt::format("{:<10} {:>12.6f} {:>12.6f}\n", k, m, sd);
  }
  json summary;
  summary["seeds"] = c.seeds;
  summary["trials"] = trials;
  summary["mean"] = mean;
  summary["std"] = stdev;
  write_text(c.out / "metrics.json", summary.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / predict / explain

struct CheckpointFlags {
  std::string checkpoint;
  std::string data;
  std::string config;
  std::string out;
  std::string split = "test";
};

void add_checkpoint_flags(CLI::App* cmd, CheckpointFlags& f, bool out_required) {
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint.json written by train")->required();
  cmd->add_option("--data", f.data, "CSV file");
  cmd->add_option("--config", f.config, "Run config supplying the data source");
  auto* out = cmd->add_option("--out", f.out, "Output directory");
  if (out_required) out->required();
}

Table checkpoint_table(const CheckpointFlags& f, const DataManifest& manifest) {
  if (!f.data.empty()) {
    if (!fs::exists(f.data)) throw IoError("data file not found: " + f.data);
    return load_csv(f.data, manifest.schema);
  }
  if (f.config.empty()) throw ConfigError("pass --data <csv> or --config <run config>");
  DataSource source = load_run_config(f.config).data;
  source.schema = manifest.schema;
  return load_table(source);
}

int cmd_evaluate(const CheckpointFlags& f) {
  const LoadedCheckpoint ck = load_checkpoint(f.checkpoint);
  const Table table = checkpoint_table(f, ck.manifest);
  const PreparedData prep = prepare_with_manifest(table, ck.manifest);
  SeriesDataset ds;
  if (f.split == "train") ds = prep.train;
  else if (f.split == "val") ds = prep.val;
  else if (f.split == "test") ds = prep.test;
  else ds = window_with_manifest(table, ck.manifest);
  const MetricReport report = report_for(ck.model, ds, prep.train, ck.manifest);
  std::cout << report.table();
  if (!f.out.empty()) {
    ensure_dir(f.out);
    json j;
    j["split"] = f.split;
    j["checkpoint_sha256"] = checkpoint_hash(checkpoint_json(ck.model, ck.manifest));
    j["test"] = report.to_json();
    j["loss"] = evaluate_loss(ck.model, ds).to_json();
    write_text(fs::path(f.out) / "metrics.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_predict(const CheckpointFlags& f) {
  const LoadedCheckpoint ck = load_checkpoint(f.checkpoint);
  const Table table = checkpoint_table(f, ck.manifest);
  const SeriesDataset ds = window_with_manifest(table, ck.manifest);
  const Vector p = predict(ck.model, ds, ck.manifest);
  const bool stamps = !table.timestamps.empty();
  std::ostringstream csv;
  csv << "row," << (stamps ? "timestamp," : "") << "prediction\n";
  csv.precision(17);
  for (Index i = 0; i < p.size(); ++i) {
    const std::size_t row = ds.target_rows[static_cast<std::size_t>(i)];
    csv << row << ',';
    if (stamps) csv << table.timestamps[row] << ',';
    csv << p[i] << '\n';
  }
  ensure_dir(f.out);
  write_text(fs::path(f.out) / "predictions.csv", csv.str());
  log()->info("{} predictions written to {}", p.size(), (fs::path(f.out) / "predictions.csv").string());
  return 0;
}

int cmd_explain(const CheckpointFlags& f, ExplainOptions options, const std::optional<Index>& grid,
                const std::optional<Index>& bins, const std::optional<Index>& samples) {
  if (!f.config.empty()) options = load_run_config(f.config).explain;
  if (grid) options.grid_size = *grid;
  if (bins) options.density_bins = *bins;
  if (samples) options.max_samples = *samples;
  if (options.grid_size < 2 || options.density_bins < 1 || options.max_samples < 0) {
    throw ConfigError("explain options out of range");
  }
  const LoadedCheckpoint ck = load_checkpoint(f.checkpoint);
  const Table table = checkpoint_table(f, ck.manifest);
  const PreparedData prep = prepare_with_manifest(table, ck.manifest);
  const Explanation e = explain(ck.model, prep.train, prep.test, ck.manifest.norm, options);
  ensure_dir(f.out);
  write_explanation(e, f.out);
  for (std::size_t i = 0; i < e.shapes.size(); ++i) {
    std::cout << fmt::format("{:>3} {:<16} {:.4f}  {}\n", i + 1, e.shapes[i].feature,
                             e.shapes[i].weight,
                             svg_name(e.shapes[i], static_cast<Index>(i + 1),
                                      static_cast<Index>(e.shapes.size())));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::string config;
  std::string out;
  std::optional<Index> relevant, irrelevant, length;
  std::optional<double> noise;
  std::optional<std::uint64_t> seed;
  std::string task;
  std::vector<std::string> shapes;
};

int cmd_synth(const SynthFlags& f) {
  SyntheticSpec spec;
  if (!f.config.empty()) {
    const RunConfig c = load_run_config(f.config);
    if (!c.data.synthetic) throw ConfigError(f.config + " has no data.synthetic section");
    spec = *c.data.synthetic;
  }
  if (f.relevant) spec.relevant = *f.relevant;
  if (f.irrelevant) spec.irrelevant = *f.irrelevant;
  if (f.length) spec.length = *f.length;
  if (f.noise) spec.noise_std = *f.noise;
  if (f.seed) spec.seed = *f.seed;
  if (!f.task.empty()) spec.task = parse_task(f.task);
  if (!f.shapes.empty()) {
    spec.shapes.clear();
    for (const auto& s : f.shapes) spec.shapes.push_back(parse_shape_kind(s));
  }
  const SyntheticData syn = generate_synthetic(spec);
  std::ostringstream csv;
  write_csv(csv, syn.table);
  ensure_dir(f.out);
  write_text(fs::path(f.out) / "data.csv", csv.str());
  write_text(fs::path(f.out) / "ground_truth.json", syn.ground_truth().dump(2) + "\n");
  std::cout << "relevant:";
  for (std::size_t i = 0; i < syn.relevant_channels.size(); ++i) {
    std::cout << ' ' << syn.relevant_channels[i] << '=' << to_string(syn.shapes[i]);
  }
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(std::uint64_t seed, const std::string& out) {
  const auto rows = run_gradient_suite(seed);
  bool ok = true;
  json j = json::array();
  std::cout << fmt::format("{:<10} {:<40} {:>8} {:>12}  {}\n", "group", "case", "entries",
                           "max error", "status");
  for (const auto& r : rows) {
    const bool pass = r.report.max_error < kGradTolerance;
    ok = ok && pass;
    std::cout << fmt::format("{:<10} {:<40} {:>8} {:>12.3e}  {}\n", r.group, r.name, r.entries,
                             r.report.max_error, pass ? "PASS" : "FAIL");
    j.push_back({{"group", r.group},
                 {"case", r.name},
                 {"entries", r.entries},
                 {"max_error", r.report.max_error},
                 {"pass", pass}});
  }
  if (!out.empty()) {
    ensure_dir(out);
    write_text(fs::path(out) / "gradcheck.json", j.dump(2) + "\n");
  }
  std::cout << (ok ? "all rows pass" : "gradient check FAILED") << " (tolerance "
            << kGradTolerance << ")\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const RunFlags& f) {
  const RunConfig c = build_config(f, "ablate");
  const PreparedData prep = prepare(c);
  json rows = json::array();
  std::vector<std::pair<std::string, double>> medians;
  for (const auto& arm : c.arms) {
    const auto [rnn, unit] = parse_arm(arm);
    std::vector<double> losses;
    for (int s = 0; s < c.seeds; ++s) {
      TrainConfig cfg = c.train;
      cfg.rnn = rnn;
      cfg.unit = unit;
      cfg.seed = c.train.seed + static_cast<std::uint64_t>(s);
      FitResult result;
      const AmnModel model = train_model(cfg, prep, result, nullptr);
      losses.push_back(evaluate_loss(model, prep.test).loss_mod);
      log()->info("{} seed {}: test loss {:.5f}", arm, cfg.seed, losses.back());
    }
    const double med = median(losses);
    medians.emplace_back(arm, med);
    rows.push_back({{"arm", arm}, {"median_test_loss", med}, {"test_loss", losses}});
  }
  const std::string loss_name = c.train.task == Task::kRegression ? "test MSE" : "test BCE";
  std::cout << fmt::format("{:<14} {:>14}   (median of {} seeds)\n", "arm", loss_name, c.seeds);
  for (const auto& [arm, med] : medians) std::cout << fmt::format("{:<14} {:>14.6f}\n", arm, med);
  const auto best = std::min_element(medians.begin(), medians.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  std::cout << "lowest: " << best->first << "\n";
  ensure_dir(c.out);
  json j;
  j["loss"] = loss_name;
  j["seeds"] = c.seeds;
  j["arms"] = rows;
  j["lowest"] = best->first;
  j["config"] = c.to_json();
  write_text(c.out / "ablation.json", j.dump(2) + "\n");
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Attention modular networks: train, evaluate and explain additive sequence models"};
  app.require_subcommand(1);

  RunFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one or more seeds and write checkpoints");
  add_run_flags(train, train_flags);

  RunFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Median test loss per rnn/unit arm");
  add_run_flags(ablate, ablate_flags);
  ablate->add_option("--arms", ablate_flags.arms, "Arms such as lstm/anb gru/linear");

  CheckpointFlags eval_flags;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics of a checkpoint on a dataset");
  add_checkpoint_flags(evaluate, eval_flags, false);
  evaluate->add_option("--split", eval_flags.split, "Rows to score")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  CheckpointFlags predict_flags;
  auto* predict_cmd = app.add_subcommand("predict", "Write predictions.csv for every window");
  add_checkpoint_flags(predict_cmd, predict_flags, true);

  CheckpointFlags explain_flags;
  std::optional<Index> grid, bins, samples;
  auto* explain_cmd = app.add_subcommand("explain", "Shape functions and per-sample contributions");
  add_checkpoint_flags(explain_cmd, explain_flags, true);
  explain_cmd->add_option("--grid-size", grid, "Points per shape curve");
  explain_cmd->add_option("--bins", bins, "Density histogram bins");
  explain_cmd->add_option("--max-samples", samples, "Test samples decomposed");

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic set with planted relevance");
  synth->add_option("--config", synth_flags.config, "Run config with data.synthetic");
  synth->add_option("--out", synth_flags.out, "Output directory")->required();
  synth->add_option("--relevant", synth_flags.relevant, "Relevant channels");
  synth->add_option("--irrelevant", synth_flags.irrelevant, "Irrelevant channels");
  synth->add_option("--length", synth_flags.length, "Rows");
  synth->add_option("--noise", synth_flags.noise, "Noise standard deviation");
  synth->add_option("--seed", synth_flags.seed, "Generator seed");
  synth->add_option("--task", synth_flags.task, "Task")
      ->check(CLI::IsMember({"regression", "classification"}));
  synth->add_option("--shapes", synth_flags.shapes, "Shape per relevant channel")->delimiter(',');

  std::uint64_t grad_seed = 7;
  std::string grad_out;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gradcheck->add_option("--seed", grad_seed, "Seed of the random inputs");
  gradcheck->add_option("--out", grad_out, "Directory for gradcheck.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*ablate) return cmd_ablate(ablate_flags);
    if (*evaluate) return cmd_evaluate(eval_flags);
    if (*predict_cmd) return cmd_predict(predict_flags);
    if (*explain_cmd) return cmd_explain(explain_flags, ExplainOptions{}, grid, bins, samples);
    if (*synth) return cmd_synth(synth_flags);
    if (*gradcheck) return cmd_gradcheck(grad_seed, grad_out);
  } catch (const std::exception& e) {
    const int code = exit_code(e);
    std::cerr << "amn: " << error_kind(e) << " error: " << e.what() << "\n";
    return code;
  }
  return 1;
}

}  // namespace amn::cli
