// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/data.hpp"
#include "amn/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace amn {

struct ExplainOptions {
  Index grid_size = 256;
  Index density_bins = 32;
  /// Samples decomposed into explanation.json (from the start of the dataset).
  Index max_samples = 100;
};

/// One module's contribution curve over the training range of its feature.
/// `contributions` are centered: the training data's mean contribution,
/// with each training value counted at its nearest grid point, is removed.
struct ShapeFunction {
  std::string feature;
  Index feature_index = 0;
  double weight = 0.0;                // mean attention weight of the feature
  std::vector<double> grid;           // normalized, strictly ascending
  std::vector<double> grid_original;  // same points in original units
  std::vector<double> contributions;  // centered module output per grid point
  double offset = 0.0;                // value subtracted from the raw outputs
  std::vector<double> bin_edges;      // normalized, density_bins + 1
  std::vector<double> density;        // training counts per bin / max count

  nlohmann::ordered_json to_json() const;
  static ShapeFunction from_json(const nlohmann::json& j);
  bool operator==(const ShapeFunction&) const = default;
};

/// Sweeps the module of `feature` alone. ContractError naming the selected
/// features when `feature` has no module.
ShapeFunction sweep_shape(const AmnModel& model, Index feature, const SeriesDataset& train,
                          const NormMeta& norm, const ExplainOptions& options = {});

struct Decomposition {
  double beta = 0.0;
  std::vector<Index> features;  // feature index per contribution column
  RowMatrix contributions;      // [B, n]
  Vector prediction;            // [B], pre-link; equals beta + row sums exactly
};

/// Evaluation-mode contributions of each selected feature for every row.
Decomposition decompose(const AmnModel& model, const RowMatrix& inputs);

struct SampleExplanation {
  std::size_t row = 0;  // source row of the sample's target
  double prediction = 0.0;
  std::vector<double> contributions;  // same order as Explanation::selected

  bool operator==(const SampleExplanation&) const = default;
};

struct Explanation {
  int version = 1;
  Task task = Task::kRegression;
  std::vector<std::string> feature_names;
  std::vector<double> feature_weights;  // every flattened feature
  std::vector<std::string> selected;    // descending final weight
  double beta = 0.0;
  std::vector<ShapeFunction> shapes;    // same order as selected
  std::vector<SampleExplanation> samples;

  nlohmann::ordered_json to_json() const;
  /// VersionError for a foreign document or an unknown version.
  static Explanation from_json(const nlohmann::json& j);
  bool operator==(const Explanation&) const = default;
};

Explanation explain(const AmnModel& model, const SeriesDataset& train, const SeriesDataset& samples,
                    const NormMeta& norm, const ExplainOptions& options = {});

/// Stable text form of explanation.json.
std::string explanation_text(const Explanation& e);
std::string render_svg(const ShapeFunction& shape, Index rank);
/// File name of the SVG for the module at 1-based `rank` out of `count`.
std::string svg_name(const ShapeFunction& shape, Index rank, Index count);
/// Writes explanation.json and one SVG per shape into `dir`; IoError when
/// the directory cannot be written.
void write_explanation(const Explanation& e, const std::filesystem::path& dir);

}  // namespace amn
