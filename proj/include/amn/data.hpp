// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amn {

enum class Task { kRegression, kClassification };
std::string to_string(Task task);
Task parse_task(std::string_view text);

enum class ColumnKind { kNumeric, kCategorical };

/// Column typing for CSV ingestion. With no explicit columns every
/// non-timestamp column is read and typed by inspection (numeric when every
/// observed cell parses as a number).
struct CsvSchema {
  std::optional<std::string> timestamp;
  std::vector<std::pair<std::string, ColumnKind>> columns;
  /// Known categorical codes; unseen labels are appended.
  std::map<std::string, std::vector<std::string>> vocabularies;

  static CsvSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Column-major table; NaN marks a missing cell.
struct Table {
  std::vector<std::string> names;
  std::vector<ColumnKind> kinds;
  std::vector<std::vector<double>> columns;
  std::vector<std::string> timestamps;
  std::string timestamp_name = "timestamp";
  std::map<std::string, std::vector<std::string>> vocabularies;

  std::size_t rows() const { return columns.empty() ? timestamps.size() : columns.front().size(); }
  /// Throws DataError naming the available columns.
  std::size_t column_index(std::string_view name) const;
  const std::vector<double>& column(std::string_view name) const;
  Table slice_rows(std::size_t begin, std::size_t end) const;
};

Table parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "<csv>");
/// Throws IoError when the file cannot be opened.
Table load_csv(const std::filesystem::path& path, const CsvSchema& schema);
/// Writes numbers with round-trip precision; categorical codes as labels.
void write_csv(std::ostream& out, const Table& table);

/// Linear interpolation of interior gaps, nearest-value fill at the edges.
/// Throws DataError for a column with no observed value.
Table interpolate_missing(Table table);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct TableSplit {
  Table train;
  Table val;
  Table test;
  std::array<RowRange, 3> rows;
};

/// Contiguous chronological train/val/test segments. Fractions must be
/// non-negative and sum to one; an empty segment is a ConfigError.
std::array<RowRange, 3> split_rows(std::size_t rows, std::array<double, 3> fractions);
TableSplit chrono_split(const Table& table, std::array<double, 3> fractions);

enum class NormScheme { kZScore, kMinMax };
std::string to_string(NormScheme scheme);
NormScheme parse_norm_scheme(std::string_view text);

/// x_normalized = (x - shift) / scale.
struct ChannelStats {
  double shift = 0.0;
  double scale = 1.0;

  double normalize(double x) const { return (x - shift) / scale; }
  double denormalize(double z) const { return z * scale + shift; }
};

struct NormMeta {
  NormScheme scheme = NormScheme::kZScore;
  std::vector<std::string> channels;
  std::vector<ChannelStats> stats;
  std::optional<ChannelStats> target;  // absent for classification
  std::vector<std::string> warnings;

  const ChannelStats& channel(std::string_view name) const;
  nlohmann::json to_json() const;
  static NormMeta from_json(const nlohmann::json& j);
};

/// Statistics from the training rows only. A constant channel keeps
/// shift 0 / scale 1 and records a warning.
NormMeta fit_normalization(const Table& train, std::span<const std::string> channels,
                           const std::optional<std::string>& target, NormScheme scheme);
Table normalize(Table table, const NormMeta& meta, const std::string& target_name);
Table denormalize(Table table, const NormMeta& meta, const std::string& target_name);

/// Windowed samples. Flattened feature j = lag * channels + channel, named
/// "<channel>_t<lag>" with t0 the oldest row of the window.
struct SeriesDataset {
  std::vector<std::string> channel_names;
  std::vector<std::string> feature_names;
  std::string target_name;
  Index window = 1;
  RowMatrix inputs;  // [N, window * channels]
  Vector targets;    // [N]
  std::vector<std::size_t> target_rows;

  Index size() const { return inputs.rows(); }
  Index channels() const { return static_cast<Index>(channel_names.size()); }
  Index features() const { return inputs.cols(); }
  double value(Index sample, Index lag, Index channel) const {
    return inputs(sample, lag * channels() + channel);
  }
  SeriesDataset subset(std::span<const Index> samples) const;
};

std::vector<std::string> flattened_feature_names(std::span<const std::string> channels,
                                                 Index window);

/// Sample i covers rows [i, i + window); its target is `target` at row
/// i + window - 1 + horizon.
SeriesDataset window(const Table& table, Index window_length, const std::string& target,
                     std::span<const std::string> channels, Index horizon = 1);

/// Everything needed to rebuild identical samples from a CSV at inference.
struct DataManifest {
  int version = 1;
  CsvSchema schema;
  Task task = Task::kRegression;
  std::string target;
  std::vector<std::string> channels;
  std::vector<std::string> feature_names;
  Index window = 1;
  Index horizon = 1;
  std::array<double, 3> fractions{0.7, 0.15, 0.15};
  std::array<RowRange, 3> split_rows{};
  NormMeta norm;

  nlohmann::json to_json() const;
  static DataManifest from_json(const nlohmann::json& j);
};

struct DataSpec {
  std::string target;
  std::vector<std::string> channels;  // empty: every column but target/timestamp
  bool include_target = false;        // add the target's own history as a channel
  Index window = 1;
  std::array<double, 3> fractions{0.7, 0.15, 0.15};
  NormScheme scheme = NormScheme::kZScore;
};

struct PreparedData {
  SeriesDataset train;
  SeriesDataset val;
  SeriesDataset test;
  DataManifest manifest;
};

/// interpolate -> split rows -> fit normalization on train -> window each
/// segment separately, so no window crosses a split boundary.
PreparedData prepare_data(const Table& table, const CsvSchema& schema, const DataSpec& spec,
                          Task task);
/// Same pipeline with the manifest's frozen normalization and splits.
PreparedData prepare_with_manifest(const Table& table, const DataManifest& manifest);
/// Windows the whole table with the manifest's normalization (no split).
SeriesDataset window_with_manifest(const Table& table, const DataManifest& manifest);

/// Target values of `ds` in original units.
Vector original_targets(const SeriesDataset& ds, const DataManifest& manifest);

// ---------------------------------------------------------------------------
// Synthetic data with planted relevance.

enum class ShapeKind { kIdentity, kSine, kQuadratic, kStep, kCubic, kAbs };
std::string to_string(ShapeKind kind);
ShapeKind parse_shape_kind(std::string_view text);
double apply_shape(ShapeKind kind, double x);

struct SyntheticSpec {
  Index relevant = 4;
  Index irrelevant = 6;
  /// One per relevant channel; empty cycles sine, quadratic, step, identity.
  std::vector<ShapeKind> shapes;
  double noise_std = 0.1;
  Index length = 2000;
  Task task = Task::kRegression;
  std::uint64_t seed = 0;

  static SyntheticSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SyntheticData {
  Table table;  // channels x00.. plus target column "y"
  std::string target = "y";
  std::vector<std::string> relevant_channels;
  std::vector<ShapeKind> shapes;
  SyntheticSpec spec;

  nlohmann::json ground_truth() const;
};

/// Channels are iid Uniform(-2, 2). The target at row t is the sum of the
/// relevant channels' shapes at row t - 1 plus Gaussian noise; classification
/// thresholds that latent sum at its median.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace amn
