// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/data.hpp"
#include "amn/explain.hpp"
#include "amn/train.hpp"

#include <nlohmann/json.hpp>

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace amn::cli {

/// Where the rows come from: a CSV file or a generated synthetic set.
struct DataSource {
  std::optional<std::filesystem::path> csv;
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> schema_file;
  CsvSchema schema;
  DataSpec spec;
};

/// Contents of a run config file. Relative paths are resolved against the
/// directory of the file.
struct RunConfig {
  int version = 1;
  std::string command;
  DataSource data;
  TrainConfig train;
  std::filesystem::path out = "amn-out";
  int seeds = 1;  // trials use train.seed, train.seed + 1, ...
  ExplainOptions explain;
  std::vector<std::string> arms{"lstm/anb", "lstm/linear", "lstm/exu",
                                "gru/anb",  "gru/linear",  "gru/exu"};

  /// ConfigError for unknown keys or bad values, VersionError for a
  /// foreign version.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
  void validate() const;
};

/// IoError when missing or unreadable, ConfigError when not valid JSON.
RunConfig load_run_config(const std::filesystem::path& path);

/// Rows of the configured source; IoError naming a missing CSV.
Table load_table(const DataSource& source);

/// 0 ok, 1 internal, 2 user or config, 3 data.
int exit_code(const std::exception& e);

/// Entry point of the amn executable.
int run(int argc, char** argv);

}  // namespace amn::cli
