// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/data.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <span>
#include <string>

namespace amn {

// Regression metrics. Inputs must be non-empty and of equal length
// (ContractError otherwise).

/// Mean of 2|yhat - y| / (|y| + |yhat|) as a fraction; terms with a zero
/// denominator contribute 0.
double smape(std::span<const double> y, std::span<const double> yhat);
/// Mean absolute error scaled by the in-sample one-step naive error of
/// `y_train`. UndefinedMetricError if that error is zero or y_train has
/// fewer than two values.
double mase(std::span<const double> y, std::span<const double> yhat,
            std::span<const double> y_train);
/// sum|y - yhat| / sum|y|. UndefinedMetricError when all targets are zero.
double wape(std::span<const double> y, std::span<const double> yhat);

// Classification metrics over 0/1 labels and probabilities.

double accuracy(std::span<const double> y, std::span<const double> p, double threshold = 0.5);
/// F1 of the positive class; 0 whenever precision or recall is undefined.
double f1(std::span<const double> y, std::span<const double> p, double threshold = 0.5);
/// Mann-Whitney rank statistic with half credit for ties.
/// UndefinedMetricError unless both classes are present.
double auc(std::span<const double> y, std::span<const double> p);

struct MetricReport {
  Task task = Task::kRegression;
  std::map<std::string, double> values;  // {smape, mase, wape} or {accuracy, f1, auc}
  std::size_t n_samples = 0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  /// Two aligned columns, one metric per line.
  std::string table() const;
};

MetricReport regression_report(std::span<const double> y, std::span<const double> yhat,
                               std::span<const double> y_train);
MetricReport classification_report(std::span<const double> y, std::span<const double> p);

}  // namespace amn
