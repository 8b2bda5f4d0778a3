// SPDX-License-Identifier: Apache-2.0
#include "amn/error.hpp"
#include "amn/ops.hpp"
#include "amn/train.hpp"

#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

namespace amn {
namespace {

using V = std::vector<double>;

TEST(Loss, Mse) {
  EXPECT_EQ(mse(V{1, 2}, V{1, 2}), 0.0);
  EXPECT_EQ(mse(V{0, 2}, V{1, 1}), 1.0);
  EXPECT_THROW(mse(V{}, V{}), ContractError);
}

TEST(Loss, BceAtZeroLogit) {
  EXPECT_NEAR(bce_logits(V{1}, V{0}), std::log(2.0), 1e-15);
  // Stable for large logits.
  EXPECT_NEAR(bce_logits(V{0}, V{800}), 800.0, 1e-9);
  EXPECT_NEAR(bce_logits(V{1}, V{800}), 0.0, 1e-12);
}

TEST(Loss, JointValues) {
  const V y{0.5, -1.0, 2.0}, main{0.4, -0.7, 2.5}, aux{1.0, 0.0, 1.0};
  LossReport same = joint_loss_values(main, main, y, Task::kRegression);
  EXPECT_DOUBLE_EQ(same.loss_amn, 2.0 * same.loss_mod);
  LossReport perfect = joint_loss_values(y, y, y, Task::kRegression);
  EXPECT_EQ(perfect.loss_amn, 0.0);
  LossReport r = joint_loss_values(aux, main, y, Task::kRegression);
  const double mod = (0.01 + 0.09 + 0.25) / 3.0, ra = (0.25 + 1.0 + 1.0) / 3.0;
  EXPECT_NEAR(r.loss_mod, mod, 1e-15);
  EXPECT_NEAR(r.loss_rnn_afs, ra, 1e-15);
  EXPECT_NEAR(r.loss_amn, mod + ra, 1e-15);
}

TEST(Schedule, Endpoints) {
  const Index total = 1000;
  const double lr = 3e-3;
  const Index w = warmup_steps(total, 0.05);
  EXPECT_EQ(w, 50);
  EXPECT_EQ(cosine_warmup_lr(0, total, lr, 0.05), 0.0);
  EXPECT_DOUBLE_EQ(cosine_warmup_lr(w, total, lr, 0.05), lr);
  EXPECT_LE(cosine_warmup_lr(total - 1, total, lr, 0.05), 1e-8 * lr);
  EXPECT_THROW(cosine_warmup_lr(total, total, lr, 0.05), ContractError);
}

TEST(Schedule, SinglePeakAndContinuity) {
  for (Index total : {3, 10, 97, 2000}) {
    for (double frac : {0.0, 0.05, 0.3}) {
      const Index w = warmup_steps(total, frac);
      double prev = cosine_warmup_lr(0, total, 1.0, frac);
      int peaks = 0;
      for (Index s = 1; s < total; ++s) {
        const double cur = cosine_warmup_lr(s, total, 1.0, frac);
        EXPECT_GE(cur, 0.0);
        if (s <= w) EXPECT_GE(cur, prev) << total << " " << frac << " " << s;
        else EXPECT_LE(cur, prev) << total << " " << frac << " " << s;
        if (s == w) ++peaks;
        EXPECT_LE(std::abs(cur - prev), std::max(1.0 / std::max<Index>(w, 1), std::numbers::pi / (total - 1 - w)) + 1e-12);
        prev = cur;
      }
      if (w > 0) EXPECT_EQ(peaks, 1);
    }
  }
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::from_values({3}, V{1, 2, 3}, true);
  backward(sum(p * 0.0));
  Adam adam;
  adam.step({{"p", p}}, 0.1);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[2], 3.0);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::scalar(5.0, true);
  backward(p);  // g = 1
  Adam adam;
  adam.step({{"p", p}}, 0.01);
  EXPECT_NEAR(p.item(), 5.0 - 0.01, 1e-9);
}

TEST(AdamTest, TenStepsMatchScalarReference) {
  const V a{1.0, 3.0, 0.5}, c{2.0, -1.0, 0.25};
  Tensor p = Tensor::from_values({3}, V{0.0, 0.0, 0.0}, true);
  Tensor av = Tensor::from_values({3}, a), cv = Tensor::from_values({3}, c);
  Adam adam;
  V theta{0, 0, 0}, m{0, 0, 0}, v{0, 0, 0};
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 10; ++t) {
    p.zero_grad();
    backward(sum(av * square(p - cv)));
    adam.step({{"p", p}}, lr);
    for (int i = 0; i < 3; ++i) {
      const double g = 2.0 * a[i] * (theta[i] - c[i]);
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
      theta[i] -= lr * mh / (std::sqrt(vh) + eps);
      EXPECT_NEAR(p[i], theta[i], 1e-12) << "step " << t;
    }
  }
}

TEST(AdamTest, StateIsKeyedByName) {
  Tensor a = Tensor::scalar(1.0, true), b = Tensor::scalar(1.0, true);
  Adam adam;
  backward(a * 2.0);
  backward(b * 2.0);
  adam.step({{"a", a}, {"b", b}}, 0.1);
  // Second step drops "a"; "b" keeps its moments and matches a solo run.
  b.zero_grad();
  backward(b * 2.0);
  adam.step({{"b", b}}, 0.1);
  Tensor solo = Tensor::scalar(1.0, true);
  Adam ref;
  for (int i = 0; i < 2; ++i) {
    solo.zero_grad();
    backward(solo * 2.0);
    ref.step({{"b", solo}}, 0.1);
  }
  EXPECT_EQ(b.item(), solo.item());
}

TEST(Clip, ScalesToMaxNorm) {
  Tensor a = Tensor::from_values({2}, V{0, 0}, true);
  backward(sum(a * Tensor::from_values({2}, V{3, 4})));
  const double norm = clip_grad_norm({{"a", a}}, 1.0);
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_EQ(clip_grad_norm({{"a", a}}, 10.0), a.grad().norm());
}

TEST(Config, RejectsUnknownKeysAndBadRanges) {
  EXPECT_THROW(TrainConfig::from_json({{"epoch", 3}}), ConfigError);
  TrainConfig c;
  c.selection_epoch = c.epochs + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.initial_lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.d_model = 30;  // not divisible by 4 heads
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c;
  c.epochs = 17;
  c.n_features = 3;
  c.unit = UnitKind::kExu;
  c.rnn = RnnKind::kGru;
  c.task = Task::kClassification;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

struct Small {
  PreparedData prep;
  TrainConfig cfg;
};

Small small_problem(std::uint64_t data_seed = 1) {
  SyntheticSpec spec;
  spec.relevant = 2;
  spec.irrelevant = 2;
  spec.length = 240;
  spec.seed = data_seed;
  const SyntheticData syn = generate_synthetic(spec);
  DataSpec ds;
  ds.target = "y";
  ds.window = 2;
  Small s{prepare_data(syn.table, {}, ds, Task::kRegression), {}};
  s.cfg.epochs = 6;
  s.cfg.batch_size = 32;
  s.cfg.rnn_hidden = 8;
  s.cfg.d_model = 8;
  s.cfg.num_heads = 2;
  s.cfg.module_h1 = 8;
  s.cfg.module_h2 = 4;
  s.cfg.n_features = 4;
  s.cfg.selection_epoch = 2;
  return s;
}

std::string run_history(const Small& s, AmnModel* out = nullptr) {
  AmnModel model = AmnModel::init(s.cfg.model_config(2, s.prep.train.channels()),
                                  s.prep.train.feature_names, s.cfg.seed);
  std::ostringstream history;
  fit(model, s.prep.train, s.prep.val, s.cfg, &history);
  if (out) *out = model;
  return history.str();
}

TEST(Fit, SameSeedSameHistoryAndCheckpoint) {
  Small s = small_problem();
  AmnModel a, b;
  const std::string ha = run_history(s, &a), hb = run_history(s, &b);
  EXPECT_EQ(ha, hb);
  EXPECT_FALSE(ha.empty());
  EXPECT_EQ(checkpoint_hash(checkpoint_json(a, s.prep.manifest)),
            checkpoint_hash(checkpoint_json(b, s.prep.manifest)));
  s.cfg.seed = 9;
  EXPECT_NE(run_history(s), ha);
}

TEST(Fit, FreezesSelectionAtConfiguredEpoch) {
  Small s = small_problem();
  AmnModel model = AmnModel::init(s.cfg.model_config(2, s.prep.train.channels()),
                                  s.prep.train.feature_names, 0);
  FitResult r = fit(model, s.prep.train, s.prep.val, s.cfg);
  ASSERT_GE(r.history.size(), 2u);
  EXPECT_FALSE(r.history[0].selection_frozen);
  EXPECT_TRUE(r.history[1].selection_frozen);
  EXPECT_EQ(model.active().size(), 4u);
  EXPECT_GE(r.best_epoch, s.cfg.selection_epoch);
}

TEST(Fit, PatienceZeroStopsAtFirstWorseEpoch) {
  for (std::uint64_t seed : {1, 2, 3}) {
    Small s = small_problem(seed);
    s.cfg.epochs = 25;
    s.cfg.patience = 0;
    s.cfg.initial_lr = 0.03;
    s.cfg.selection_epoch = 1;
    AmnModel model = AmnModel::init(s.cfg.model_config(2, s.prep.train.channels()),
                                    s.prep.train.feature_names, seed);
    FitResult r = fit(model, s.prep.train, s.prep.val, s.cfg);
    double best = std::numeric_limits<double>::infinity();
    std::size_t expected = r.history.size();
    for (std::size_t e = 0; e < r.history.size(); ++e) {
      const double v = r.history[e].val.loss_amn;
      if (v < best) {
        best = v;
      } else {
        expected = e + 1;
        break;
      }
    }
    EXPECT_EQ(r.history.size(), expected) << "seed " << seed;
    EXPECT_EQ(r.early_stopped, expected < 25u);
    EXPECT_DOUBLE_EQ(r.best_val.loss_amn, best);
  }
}

TEST(Fit, RestoresBestValidationState) {
  Small s = small_problem(4);
  s.cfg.epochs = 12;
  s.cfg.initial_lr = 0.02;
  AmnModel model = AmnModel::init(s.cfg.model_config(2, s.prep.train.channels()),
                                  s.prep.train.feature_names, 0);
  FitResult r = fit(model, s.prep.train, s.prep.val, s.cfg);
  EXPECT_NEAR(evaluate_loss(model, s.prep.val).loss_amn, r.best_val.loss_amn, 1e-9);
}

}  // namespace
}  // namespace amn
