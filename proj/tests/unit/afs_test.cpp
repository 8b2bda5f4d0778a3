// SPDX-License-Identifier: Apache-2.0
#include "amn/afs.hpp"
#include "amn/error.hpp"
#include "amn/grad_check.hpp"
#include "amn/modular.hpp"
#include "amn/ops.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace amn {
namespace {

std::vector<double> row(const Tensor& t, Index b) {
  const Index d = t.dim(1);
  return {t.values().data() + b * d, t.values().data() + (b + 1) * d};
}

TEST(Afs, IdenticalTokensGiveUniformWeights) {
  Rng rng(1);
  AfsParams p = AfsParams::xavier(5, 4, 2, rng);
  Tensor one = test::random_tensor({1, 1, 4}, rng, false);
  Tensor r = broadcast_to(one, {1, 5, 4});
  AfsOutput out = afs_forward(r, p);
  for (Index j = 0; j < 5; ++j) EXPECT_NEAR(out.weights[j], 0.2, 1e-15);
}

TEST(Afs, SingleFeatureHasWeightOne) {
  Rng rng(2);
  AfsParams p = AfsParams::xavier(1, 4, 2, rng);
  AfsOutput out = afs_forward(test::random_tensor({3, 1, 4}, rng, false), p);
  for (Index b = 0; b < 3; ++b) EXPECT_EQ(out.weights[b], 1.0);
}

TEST(Afs, HandSetProjectionsMatchBruteForce) {
  // One head, d_model 2, three tokens.
  const double tok[3][2] = {{1.0, 0.0}, {0.0, 2.0}, {1.0, -1.0}};
  const double wq[2][2] = {{0.5, -0.2}, {0.1, 0.3}};
  const double wk[2][2] = {{0.4, 0.0}, {-0.3, 0.7}};
  AfsParams p;
  auto m2 = [](const double (&w)[2][2]) {
    return Tensor::from_values({2, 2}, std::vector<double>{w[0][0], w[0][1], w[1][0], w[1][1]});
  };
  p.heads.push_back({m2(wq), m2(wk), Tensor::full({2, 2}, 0.1)});
  p.w_combine = Tensor::full({2, 2}, 0.1);
  p.aux = {Tensor::full({3, 1}, 1.0), Tensor::zeros({1})};
  std::vector<double> flat;
  for (auto& t : tok) flat.insert(flat.end(), {t[0], t[1]});
  AfsOutput out = afs_forward(Tensor::from_values({1, 3, 2}, flat), p);

  double q[3][2], k[3][2], a[3][3];
  for (int i = 0; i < 3; ++i)
    for (int c = 0; c < 2; ++c) {
      q[i][c] = tok[i][0] * wq[0][c] + tok[i][1] * wq[1][c];
      k[i][c] = tok[i][0] * wk[0][c] + tok[i][1] * wk[1][c];
    }
  for (int i = 0; i < 3; ++i) {
    double z = 0.0;
    for (int j = 0; j < 3; ++j) z += a[i][j] = std::exp((q[i][0] * k[j][0] + q[i][1] * k[j][1]) / std::sqrt(2.0));
    for (int j = 0; j < 3; ++j) a[i][j] /= z;
  }
  double s[3], z = 0.0;
  for (int j = 0; j < 3; ++j) {
    s[j] = (a[0][j] + a[1][j] + a[2][j]) / 3.0;
    z += std::exp(s[j]);
  }
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(out.scores[j], s[j], 1e-12);
    EXPECT_NEAR(out.weights[j], std::exp(s[j]) / z, 1e-12);
  }
}

// Random configurations: normalization, positivity and permutation
// equivariance of F.
TEST(AfsProperty, NormalizedPositiveAndPermutationEquivariant) {
  Rng rng(3);
  std::uniform_int_distribution<Index> dd(1, 9), bb(1, 4), hh(1, 3), dv(1, 3);
  for (int trial = 0; trial < 250; ++trial) {
    const Index d = dd(rng), b = bb(rng), heads = hh(rng), d_model = heads * dv(rng);
    AfsParams p = AfsParams::xavier(d, d_model, heads, rng);
    Tensor r = test::random_tensor({b, d, d_model}, rng, false, -3, 3);
    AfsOutput out = afs_forward(r, p);
    std::vector<Index> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector pv(r.size());
    for (Index s = 0; s < b; ++s)
      for (Index j = 0; j < d; ++j)
        for (Index c = 0; c < d_model; ++c)
          pv[(s * d + j) * d_model + c] = r[(s * d + perm[j]) * d_model + c];
    AfsOutput pout = afs_forward(Tensor({b, d, d_model}, pv), p);
    for (Index s = 0; s < b; ++s) {
      const auto w = row(out.weights, s), pw = row(pout.weights, s);
      double total = 0.0;
      for (Index j = 0; j < d; ++j) {
        total += w[j];
        EXPECT_GT(w[j], 0.0);
        EXPECT_NEAR(pw[j], w[perm[j]], 1e-12);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Selection, Examples) {
  EXPECT_EQ(select_top_n(std::vector<double>{0.5, 0.3, 0.2}, 2), (std::vector<Index>{0, 1}));
  EXPECT_EQ(select_top_n(std::vector<double>{0.4, 0.4, 0.2}, 1), (std::vector<Index>{0}));
  EXPECT_EQ(select_top_n(std::vector<double>{0.1, 0.6, 0.3}, 3), (std::vector<Index>{1, 2, 0}));
  EXPECT_THROW(select_top_n(std::vector<double>{0.5, 0.5}, 0), ConfigError);
  EXPECT_THROW(select_top_n(std::vector<double>{0.5, 0.5}, 3), ConfigError);
}

TEST(SelectionProperty, DeterministicTieBreak) {
  Rng rng(4);
  std::uniform_int_distribution<int> level(0, 3);
  std::uniform_int_distribution<Index> dd(1, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const Index d = dd(rng);
    std::vector<double> w(static_cast<std::size_t>(d));
    for (double& x : w) x = 0.1 * level(rng);  // many ties
    const Index n = std::uniform_int_distribution<Index>(1, d)(rng);
    std::vector<Index> ref(static_cast<std::size_t>(d));
    std::iota(ref.begin(), ref.end(), Index{0});
    std::sort(ref.begin(), ref.end(), [&](Index a, Index b) {
      return w[a] != w[b] ? w[a] > w[b] : a < b;
    });
    ref.resize(static_cast<std::size_t>(n));
    EXPECT_EQ(select_top_n(w, n), ref);
  }
}

TEST(Anb, ZeroWeightSilencesUnit) {
  Rng rng(5);
  AnbState s{test::random_tensor({1, 4}, rng), test::random_tensor({4}, rng), Tensor::scalar(0.0)};
  Tensor y = anb_forward(test::random_tensor({3, 1}, rng, false, -5, 5), s);
  for (Index i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.0);
}

TEST(Anb, HandArithmetic) {
  AnbState s{Tensor::from_values({1, 2}, std::vector<double>{1.0, -1.0}), Tensor::zeros({2}),
             Tensor::scalar(0.5)};
  Tensor y = anb_forward(Tensor::full({1, 1}, 2.0), s);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Anb, GradientReachesAttentionWeight) {
  Rng rng(6);
  std::vector<Tensor> in{test::random_tensor({1, 3}, rng), test::random_tensor({3}, rng),
                         Tensor::scalar(0.4, true)};
  Tensor x = test::random_tensor({5, 1}, rng, false, -2, 2);
  Tensor w = test::random_tensor({5, 3}, rng, false);
  auto f = [&](std::span<const Tensor> v) { return sum(anb_forward(x, AnbState{v[0], v[1], v[2]}) * w); };
  EXPECT_LT(grad_check(f, in), 1e-5);
  backward(f(in));
  EXPECT_NE(in[2].grad()[0], 0.0);
}

FeatureModule zero_module(UnitKind unit) {
  Rng rng(0);
  FeatureModule m = FeatureModule::init(unit, 4, 3, 0.0, rng);
  for (Tensor* t : {&m.unit_weight, &m.unit_bias, &m.hidden.weight, &m.hidden.bias, &m.output.weight,
                    &m.output.bias}) {
    t->values().setZero();
  }
  return m;
}

TEST(Module, ZeroWeightsContributeNothing) {
  Rng rng(7);
  Tensor x = test::random_tensor({6, 1}, rng, false, -3, 3);
  for (UnitKind u : {UnitKind::kAnb, UnitKind::kLinear}) {
    Tensor y = module_forward(x, zero_module(u), Tensor::scalar(0.3), false, rng);
    for (Index i = 0; i < 6; ++i) EXPECT_EQ(y[i], 0.0);
  }
}

TEST(Module, HandSetLinearUnit) {
  // relu(x * 2 - 1) -> relu(. * 3) -> . * 0.5 + 0.25
  FeatureModule m{UnitKind::kLinear, Tensor::full({1, 1}, 2.0), Tensor::full({1}, -1.0),
                    {Tensor::full({1, 1}, 3.0), Tensor::zeros({1})},
                    {Tensor::full({1, 1}, 0.5), Tensor::full({1}, 0.25)}, 0.0};
  Rng rng(8);
  Tensor y = module_forward(Tensor::from_values({2, 1}, std::vector<double>{1.5, 0.0}), m,
                            Tensor(), false, rng);
  EXPECT_DOUBLE_EQ(y[0], 3.25);
  EXPECT_DOUBLE_EQ(y[1], 0.25);
}

TEST(Module, RowsAreIndependent) {
  Rng rng(9);
  FeatureModule m = FeatureModule::init(UnitKind::kAnb, 8, 4, 0.0, rng);
  Tensor f = Tensor::scalar(0.2);
  Tensor both = module_forward(Tensor::from_values({2, 1}, std::vector<double>{0.3, -1.1}), m, f, false, rng);
  Tensor a = module_forward(Tensor::full({1, 1}, 0.3), m, f, false, rng);
  Tensor b = module_forward(Tensor::full({1, 1}, -1.1), m, f, false, rng);
  EXPECT_EQ(both[0], a[0]);
  EXPECT_EQ(both[1], b[0]);
}

TEST(Ensemble, SingleModuleEqualsContribution) {
  Rng rng(10);
  ModularEnsemble e{{FeatureModule::init(UnitKind::kLinear, 4, 3, 0.0, rng)}, Tensor::scalar(0.0), 0.0};
  Tensor x = test::random_tensor({5, 1}, rng, false);
  EnsembleOutput out = ensemble_forward(x, e, Tensor(), false, rng);
  for (Index i = 0; i < 5; ++i) EXPECT_EQ(out.prediction[i], out.contributions[i]);
}

TEST(Ensemble, ZeroModulesLeaveBeta) {
  Rng rng(11);
  ModularEnsemble e{{zero_module(UnitKind::kLinear), zero_module(UnitKind::kLinear)},
                    Tensor::scalar(0.7), 0.0};
  EnsembleOutput out = ensemble_forward(test::random_tensor({3, 2}, rng, false), e, Tensor(), false, rng);
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out.prediction[i], out.beta);
  EXPECT_NEAR(out.beta, 0.7, 1e-9);
}

TEST(Ensemble, AdditivityIsExact) {
  Rng rng(12);
  ModularEnsemble e;
  for (int k = 0; k < 7; ++k) e.modules.push_back(FeatureModule::init(UnitKind::kAnb, 16, 8, 0.0, rng));
  e.beta = Tensor::scalar(0.123456789);
  Tensor f = test::random_tensor({7}, rng, false, 0.01, 0.3);
  EnsembleOutput out = ensemble_forward(test::random_tensor({200, 7}, rng, false, -3, 3), e, f, false, rng);
  for (Index i = 0; i < 200; ++i) {
    double total = 0.0;
    for (Index k = 0; k < 7; ++k) total += out.contributions[i * 7 + k];
    EXPECT_EQ(out.prediction[i] - out.beta, total);
  }
}

}  // namespace
}  // namespace amn
