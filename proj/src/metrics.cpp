// SPDX-License-Identifier: Apache-2.0
#include "amn/metrics.hpp"

#include "amn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

namespace amn {

namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.empty()) throw ContractError(std::string(what) + " of an empty series");
  if (y.size() != yhat.size()) {
    throw ContractError(std::string(what) + ": " + std::to_string(y.size()) + " targets vs " +
                        std::to_string(yhat.size()) + " predictions");
  }
}

void check_labels(std::span<const double> y, const char* what) {
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw ContractError(std::string(what) + " needs 0/1 labels");
  }
}

}  // namespace

double smape(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "smape");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double denom = std::abs(y[i]) + std::abs(yhat[i]);
    if (denom > 0.0) total += 2.0 * std::abs(yhat[i] - y[i]) / denom;
  }
  return total / static_cast<double>(y.size());
}

double mase(std::span<const double> y, std::span<const double> yhat,
            std::span<const double> y_train) {
  check_pair(y, yhat, "mase");
  if (y_train.size() < 2) throw UndefinedMetricError("mase needs at least two training values");
  double naive = 0.0;
  for (std::size_t t = 1; t < y_train.size(); ++t) naive += std::abs(y_train[t] - y_train[t - 1]);
  naive /= static_cast<double>(y_train.size() - 1);
  if (!(naive > 0.0)) throw UndefinedMetricError("mase: naive forecast error on training data is 0");
  double mae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mae += std::abs(y[i] - yhat[i]);
  mae /= static_cast<double>(y.size());
  return mae / naive;
}

double wape(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "wape");
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    err += std::abs(y[i] - yhat[i]);
    scale += std::abs(y[i]);
  }
  if (!(scale > 0.0)) throw UndefinedMetricError("wape: all targets are zero");
  return err / scale;
}

double accuracy(std::span<const double> y, std::span<const double> p, double threshold) {
  check_pair(y, p, "accuracy");
  check_labels(y, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    correct += static_cast<std::size_t>((p[i] >= threshold ? 1.0 : 0.0) == y[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double f1(std::span<const double> y, std::span<const double> p, double threshold) {
  check_pair(y, p, "f1");
  check_labels(y, "f1");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool predicted = p[i] >= threshold;
    if (predicted && y[i] == 1.0) ++tp;
    else if (predicted) ++fp;
    else if (y[i] == 1.0) ++fn;
  }
  if (tp + fp == 0 || tp + fn == 0) return 0.0;
  const double precision = tp / (tp + fp);
  const double recall = tp / (tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double auc(std::span<const double> y, std::span<const double> p) {
  check_pair(y, p, "auc");
  check_labels(y, "auc");
  // Sort by score and credit each positive with the negatives ranked below
  // it; a block of tied scores shares half credit.
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double negatives_below = 0.0;
  double twice_wins = 0.0;  // integer-valued, so the sum is exact
  double positives = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < order.size() && p[order[j]] == p[order[i]]) {
      (y[order[j]] == 1.0 ? pos : neg) += 1.0;
      ++j;
    }
    twice_wins += pos * (2.0 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  const double negatives = negatives_below;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetricError("auc needs both classes in the targets");
  }
  return twice_wins / (2.0 * positives * negatives);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["n_samples"] = n_samples;
  j["metrics"] = values;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.task = parse_task(j.at("task").get<std::string>());
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.values = j.at("metrics").get<std::map<std::string, double>>();
  return r;
}

std::string MetricReport::table() const {
  std::size_t width = 9;  // "n_samples"
  for (const auto& [name, v] : values) width = std::max(width, name.size());
  std::string out;
  char buf[128];
  for (const auto& [name, v] : values) {
    std::snprintf(buf, sizeof buf, "%-*s  %.6f\n", static_cast<int>(width), name.c_str(), v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-*s  %zu\n", static_cast<int>(width), "n_samples", n_samples);
  out += buf;
  return out;
}

MetricReport regression_report(std::span<const double> y, std::span<const double> yhat,
                               std::span<const double> y_train) {
  MetricReport r;
  r.task = Task::kRegression;
  r.n_samples = y.size();
  r.values["smape"] = smape(y, yhat);
  r.values["mase"] = mase(y, yhat, y_train);
  r.values["wape"] = wape(y, yhat);
  return r;
}

MetricReport classification_report(std::span<const double> y, std::span<const double> p) {
  MetricReport r;
  r.task = Task::kClassification;
  r.n_samples = y.size();
  r.values["accuracy"] = accuracy(y, p);
  r.values["f1"] = f1(y, p);
  r.values["auc"] = auc(y, p);
  return r;
}

}  // namespace amn
