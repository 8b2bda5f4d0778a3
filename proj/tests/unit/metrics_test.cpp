// SPDX-License-Identifier: Apache-2.0
#include "amn/error.hpp"
#include "amn/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

namespace amn {
namespace {

using V = std::vector<double>;

double brute_auc(const V& y, const V& p) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1.0) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0.0) continue;
      pairs += 1.0;
      credit += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
    }
  }
  return credit / pairs;
}

TEST(Smape, Fixtures) {
  EXPECT_EQ(smape(V{1, 2, 3}, V{1, 2, 3}), 0.0);
  EXPECT_NEAR(smape(V{1, 1}, V{1, 3}), 0.5, 1e-12);
  EXPECT_EQ(smape(V{0}, V{0}), 0.0);
  EXPECT_THROW(smape(V{}, V{}), ContractError);
  EXPECT_THROW(smape(V{1}, V{1, 2}), ContractError);
}

TEST(Mase, Fixtures) {
  EXPECT_NEAR(mase(V{1, 2}, V{2, 3}, V{1, 2, 3}), 1.0, 1e-12);
  EXPECT_EQ(mase(V{4, 5}, V{4, 5}, V{1, 2, 3}), 0.0);
  EXPECT_THROW(mase(V{1}, V{1}, V{2, 2, 2}), UndefinedMetricError);
  EXPECT_THROW(mase(V{1}, V{1}, V{2}), UndefinedMetricError);
}

TEST(Mase, NaiveForecastOnRandomWalkIsNearOne) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> step(0.0, 1.0);
  V series{0.0};
  for (int i = 0; i < 200000; ++i) series.push_back(series.back() + step(rng));
  const V train(series.begin(), series.begin() + 100000);
  V y, naive;
  for (std::size_t t = 100000; t < series.size(); ++t) {
    y.push_back(series[t]);
    naive.push_back(series[t - 1]);
  }
  EXPECT_NEAR(mase(y, naive, train), 1.0, 0.02);
}

TEST(Wape, Fixtures) {
  EXPECT_EQ(wape(V{1, 3}, V{1, 3}), 0.0);
  EXPECT_NEAR(wape(V{1, 3}, V{2, 2}), 0.5, 1e-12);
  EXPECT_NEAR(wape(V{7, 21}, V{14, 14}), 0.5, 1e-12);
  EXPECT_THROW(wape(V{0, 0}, V{1, 1}), UndefinedMetricError);
}

TEST(RegressionMetrics, ZeroOnlyForExactForecasts) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    V y(10), train(10);
    for (double& v : y) v = u(rng);
    for (double& v : train) v = u(rng);
    V off = y;
    off[static_cast<std::size_t>(trial % 10)] += 0.01;
    EXPECT_EQ(smape(y, y), 0.0);
    EXPECT_EQ(wape(y, y), 0.0);
    EXPECT_EQ(mase(y, y, train), 0.0);
    EXPECT_GT(smape(y, off), 0.0);
    EXPECT_GT(wape(y, off), 0.0);
    EXPECT_GT(mase(y, off, train), 0.0);
  }
}

TEST(Classification, Fixtures) {
  EXPECT_EQ(accuracy(V{0, 1}, V{0.1, 0.9}), 1.0);
  EXPECT_EQ(f1(V{0, 1}, V{0.1, 0.9}), 1.0);
  EXPECT_EQ(auc(V{0, 1}, V{0.1, 0.9}), 1.0);
  EXPECT_EQ(auc(V{0, 1, 1, 0}, V{1, 0, 0, 1}), 0.0);
  EXPECT_EQ(auc(V{0, 0, 1, 1}, V{0.1, 0.4, 0.35, 0.8}), 0.75);
  EXPECT_EQ(f1(V{0, 0}, V{0.1, 0.2}), 0.0);
  EXPECT_NEAR(f1(V{1, 1, 0, 0}, V{0.9, 0.2, 0.8, 0.1}), 0.5, 1e-15);
  EXPECT_THROW(auc(V{1, 1}, V{0.2, 0.3}), UndefinedMetricError);
}

TEST(Auc, MatchesBruteForceExactly) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(2, 100), level(0, 10);
  std::bernoulli_distribution coin(0.5);
  int checked = 0;
  while (checked < 500) {
    const int n = len(rng);
    V y(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[i] = coin(rng) ? 1.0 : 0.0;
      p[i] = level(rng) / 10.0;  // coarse levels force ties
    }
    const auto pos = std::count(y.begin(), y.end(), 1.0);
    if (pos == 0 || pos == n) continue;
    EXPECT_EQ(auc(y, p), brute_auc(y, p));
    ++checked;
  }
}

TEST(MetricReport, JsonRoundTripAndTable) {
  MetricReport r = regression_report(V{1, 3}, V{2, 2}, V{1, 2, 3});
  EXPECT_EQ(r.values.size(), 3u);
  MetricReport back = MetricReport::from_json(r.to_json());
  EXPECT_EQ(back.values, r.values);
  EXPECT_EQ(back.n_samples, 2u);
  EXPECT_NE(r.table().find("wape"), std::string::npos);
  MetricReport c = classification_report(V{0, 1}, V{0.2, 0.7});
  EXPECT_EQ(c.values.at("auc"), 1.0);
}

}  // namespace
}  // namespace amn
