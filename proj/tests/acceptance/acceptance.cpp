// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, details indented above it.
#include "amn/afs.hpp"
#include "amn/error.hpp"
#include "amn/explain.hpp"
#include "amn/gradient_suite.hpp"
#include "amn/metrics.hpp"
#include "amn/model.hpp"
#include "amn/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace amn {
namespace {

namespace fs = std::filesystem;
using V = std::vector<double>;

struct Verdict {
  bool pass = false;
  std::string summary;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Verdict()> run;
};

template <class... Args>
void detail(const char* fmt, Args... args) {
  std::printf("    ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double median(V v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double pearson(const V& a, const V& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Index feature_of(const SeriesDataset& ds, const std::string& channel) {
  const auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), channel + "_t0");
  return static_cast<Index>(it - ds.feature_names.begin());
}

std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Trained {
  AmnModel model;
  FitResult fit;
};

Trained train(const PreparedData& prep, const TrainConfig& cfg, std::ostream* history = nullptr) {
  AmnModel model = AmnModel::init(cfg.model_config(prep.train.window, prep.train.channels()),
                                  prep.train.feature_names, cfg.seed);
  FitResult r = fit(model, prep.train, prep.val, cfg, history);
  return {std::move(model), std::move(r)};
}

PreparedData synthetic_set(const SyntheticSpec& spec, SyntheticData* out = nullptr) {
  SyntheticData syn = generate_synthetic(spec);
  DataSpec ds;
  ds.target = syn.target;
  PreparedData prep = prepare_data(syn.table, {}, ds, spec.task);
  if (out) *out = std::move(syn);
  return prep;
}

// ---------------------------------------------------------------------------

Verdict gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_gradient_suite(7, 1e-5);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  int models = 0;
  for (const auto& r : rows) {
    if (r.report.max_error >= worst) {
      worst = r.report.max_error;
      worst_name = r.name;
    }
    if (r.group == "model") ++models;
  }
  detail("%zu checks (%d full-model), worst %s", rows.size(), models, worst_name.c_str());
  return {worst < 1e-4 && models > 0 && secs < 60.0,
          format("max rel err %.2e (< 1e-4), %.1fs (< 60s)", worst, secs)};
}

Verdict afs_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::uniform_int_distribution<Index> dd(1, 12), bb(1, 4), hh(1, 3), dv(1, 3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const int configs = 250;
  double sum_err = 0.0, perm_err = 0.0;
  bool positive = true;
  for (int trial = 0; trial < configs; ++trial) {
    const Index d = dd(rng), b = bb(rng), heads = hh(rng), d_model = heads * dv(rng);
    AfsParams p = AfsParams::xavier(d, d_model, heads, rng);
    Vector rv(b * d * d_model);
    for (Index i = 0; i < rv.size(); ++i) rv[i] = u(rng);
    const AfsOutput out = afs_forward(Tensor({b, d, d_model}, rv), p);
    std::vector<Index> perm(static_cast<std::size_t>(d));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector pv(rv.size());
    for (Index s = 0; s < b; ++s)
      for (Index j = 0; j < d; ++j)
        for (Index c = 0; c < d_model; ++c)
          pv[(s * d + j) * d_model + c] = rv[(s * d + perm[j]) * d_model + c];
    const AfsOutput pout = afs_forward(Tensor({b, d, d_model}, pv), p);
    for (Index s = 0; s < b; ++s) {
      double total = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double w = out.weights[s * d + j];
        total += w;
        positive = positive && w > 0.0;
        perm_err = std::max(perm_err, std::abs(pout.weights[s * d + j] - out.weights[s * d + perm[j]]));
      }
      sum_err = std::max(sum_err, std::abs(total - 1.0));
    }
  }

  // Tie-break: descending weight, lower index first on ties, same answer on
  // every call.
  int tie_mismatch = 0;
  std::uniform_int_distribution<int> level(0, 3);
  for (int trial = 0; trial < configs; ++trial) {
    const Index d = dd(rng);
    V w(static_cast<std::size_t>(d));
    for (double& x : w) x = 0.25 * level(rng);
    const Index n = std::uniform_int_distribution<Index>(1, d)(rng);
    std::vector<Index> ref(static_cast<std::size_t>(d));
    std::iota(ref.begin(), ref.end(), Index{0});
    std::stable_sort(ref.begin(), ref.end(), [&](Index a, Index b) { return w[a] > w[b]; });
    ref.resize(static_cast<std::size_t>(n));
    const auto first = select_top_n(w, n);
    if (first != ref || select_top_n(w, n) != first) ++tie_mismatch;
  }
  const double secs = seconds_since(t0);
  detail("%d attention configs: max |sum F - 1| %.2e, max permutation error %.2e, all positive %s",
         configs, sum_err, perm_err, positive ? "yes" : "no");
  detail("%d tie-heavy selections: %d mismatches", configs, tie_mismatch);
  return {sum_err <= 1e-6 && perm_err <= 1e-12 && positive && tie_mismatch == 0 && secs < 60.0,
          format("%d + %d configurations, %.1fs", configs, configs, secs)};
}

Verdict additivity() {
  Rng rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const Index samples = 1000, window = 3, channels = 5;
  std::vector<std::string> ch;
  for (Index c = 0; c < channels; ++c) ch.push_back("c" + std::to_string(c));
  const auto names = flattened_feature_names(ch, window);
  RowMatrix x(samples, window * channels);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
  Index violations = 0, checked = 0;
  for (RnnKind rnn : {RnnKind::kLstm, RnnKind::kGru}) {
    for (UnitKind unit : {UnitKind::kAnb, UnitKind::kLinear, UnitKind::kExu}) {
      TrainConfig cfg;
      cfg.rnn = rnn;
      cfg.unit = unit;
      AmnModel m = AmnModel::init(cfg.model_config(window, channels), names, 5);
      m.set_mean_weights(mean_feature_weights(m, x));
      m.freeze_selection();
      const ModelOutput out = m.evaluate(x);
      const Decomposition dec = decompose(m, x);
      const Index n = out.contributions.dim(1);
      Index bad = 0;
      for (Index i = 0; i < samples; ++i) {
        double total = 0.0;
        for (Index k = 0; k < n; ++k) total += out.contributions[i * n + k];
        double dec_total = dec.beta;
        for (Index k = 0; k < n; ++k) dec_total += dec.contributions(i, k);
        if (out.prediction[i] - out.beta != total || dec.prediction[i] != out.prediction[i] ||
            dec_total != dec.prediction[i])
          ++bad;
      }
      detail("%s/%s: %ld of %ld samples off", to_string(rnn).c_str(), to_string(unit).c_str(),
             static_cast<long>(bad), static_cast<long>(samples));
      violations += bad;
      checked += samples;
    }
  }
  return {violations == 0, format("%ld bit-exact violations over %ld samples", static_cast<long>(violations),
                                  static_cast<long>(checked))};
}

Verdict head_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Arm {
    RnnKind rnn;
    UnitKind unit;
    V mse;
  };
  std::vector<Arm> arms{{RnnKind::kLstm, UnitKind::kAnb, {}},
                        {RnnKind::kLstm, UnitKind::kLinear, {}},
                        {RnnKind::kLstm, UnitKind::kExu, {}},
                        {RnnKind::kGru, UnitKind::kLinear, {}}};
  for (int s = 0; s < 5; ++s) {
    SyntheticSpec spec;
    spec.relevant = 4;
    spec.irrelevant = 6;
    spec.length = 2000;
    spec.noise_std = 0.1;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    const PreparedData prep = synthetic_set(spec);
    for (Arm& arm : arms) {
      TrainConfig cfg;
      cfg.rnn = arm.rnn;
      cfg.unit = arm.unit;
      cfg.n_features = 4;
      cfg.selection_epoch = 20;
      cfg.epochs = 80;
      cfg.seed = static_cast<std::uint64_t>(s);
      Trained t = train(prep, cfg);
      arm.mse.push_back(evaluate_loss(t.model, prep.test).loss_mod);
    }
  }
  V med;
  for (const Arm& arm : arms) {
    med.push_back(median(arm.mse));
    std::string runs;
    for (double m : arm.mse) runs += format(" %.4f", m);
    detail("%-12s median test MSE %.4f  (seeds:%s)",
           (to_string(arm.rnn) + "/" + to_string(arm.unit)).c_str(), med.back(), runs.c_str());
  }
  const double secs = seconds_since(t0);
  const bool order = med[0] <= med[1] && med[1] <= med[2] && med[0] <= med[3];
  return {order && secs < 600.0,
          format("lstm/anb %.4f <= lstm/linear %.4f <= lstm/exu %.4f; gru/linear %.4f; %.0fs", med[0],
                 med[1], med[2], med[3], secs)};
}

Verdict selection_gain() {
  const auto t0 = std::chrono::steady_clock::now();
  V acc10, acc21;
  for (int s = 0; s < 5; ++s) {
    SyntheticSpec spec;
    spec.relevant = 10;
    spec.irrelevant = 11;
    spec.length = 1000;
    spec.noise_std = 0.1;
    spec.task = Task::kClassification;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    SyntheticData syn;
    const PreparedData prep = synthetic_set(spec, &syn);
    for (Index n : {Index{10}, Index{21}}) {
      TrainConfig cfg;
      cfg.task = Task::kClassification;
      cfg.n_features = n;
      cfg.epochs = 100;
      cfg.selection_epoch = 50;
      cfg.seed = static_cast<std::uint64_t>(s);
      Trained t = train(prep, cfg);
      const Vector p = predict(t.model, prep.test, prep.manifest);
      const double a = accuracy(view(prep.test.targets), view(p));
      (n == 10 ? acc10 : acc21).push_back(a);
      if (n == 10) {
        int hits = 0;
        for (Index j : t.model.active())
          for (const auto& rc : syn.relevant_channels)
            if (j == feature_of(prep.train, rc)) ++hits;
        detail("seed %d: n=10 accuracy %.4f (%d/10 relevant selected)", s, a, hits);
      } else {
        detail("seed %d: n=21 accuracy %.4f", s, a);
      }
    }
  }
  const double m10 = median(acc10), m21 = median(acc21), secs = seconds_since(t0);
  return {m10 - m21 >= 0.02 && secs < 600.0,
          format("median accuracy n=10 %.4f vs n=21 %.4f, gap %+.1f pp (need >= +2.0); %.0fs", m10, m21,
                 100.0 * (m10 - m21), secs)};
}

Verdict relevance_recovery() {
  double recall = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    SyntheticSpec spec;
    spec.seed = 100 + static_cast<std::uint64_t>(s);
    SyntheticData syn;
    const PreparedData prep = synthetic_set(spec, &syn);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    Trained t = train(prep, cfg);
    const Vector& w = t.model.mean_weights();
    const Index r = static_cast<Index>(syn.relevant_channels.size());
    const auto top = select_top_n(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())), r);
    int hits = 0;
    for (Index j : top)
      for (const auto& rc : syn.relevant_channels)
        if (j == feature_of(prep.train, rc)) ++hits;
    recall += static_cast<double>(hits) / static_cast<double>(r);
    detail("seed %d: %d/%ld planted channels in top %ld", s, hits, static_cast<long>(r), static_cast<long>(r));
  }
  recall /= seeds;
  return {recall >= 0.9, format("mean recall %.3f (>= 0.9)", recall)};
}

Verdict shape_fidelity() {
  double worst = 1.0;
  for (int s = 0; s < 3; ++s) {
    SyntheticSpec spec;
    spec.relevant = 2;
    spec.irrelevant = 2;
    spec.shapes = {ShapeKind::kSine, ShapeKind::kQuadratic};
    spec.noise_std = 0.0;
    spec.seed = 200 + static_cast<std::uint64_t>(s);
    SyntheticData syn;
    const PreparedData prep = synthetic_set(spec, &syn);
    TrainConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(s);
    Trained t = train(prep, cfg);
    for (std::size_t i = 0; i < syn.relevant_channels.size(); ++i) {
      const ShapeFunction sh =
          sweep_shape(t.model, feature_of(prep.train, syn.relevant_channels[i]), prep.train,
                      prep.manifest.norm);
      V truth;
      for (double x : sh.grid_original) truth.push_back(apply_shape(syn.shapes[i], x));
      // Center on the same grid so both curves share a reference.
      const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / truth.size();
      for (double& v : truth) v -= mean;
      const double r = pearson(sh.contributions, truth);
      worst = std::min(worst, r);
      detail("seed %d: %s (%s) r = %.4f", s, syn.relevant_channels[i].c_str(),
             to_string(syn.shapes[i]).c_str(), r);
    }
  }
  return {worst >= 0.9, format("min Pearson %.4f (>= 0.9)", worst)};
}

Verdict overfit() {
  SyntheticSpec spec;
  spec.length = 200;
  spec.seed = 300;
  const PreparedData prep = synthetic_set(spec);
  std::vector<Index> rows(64);
  std::iota(rows.begin(), rows.end(), Index{0});
  const SeriesDataset tiny = prep.train.subset(rows);
  TrainConfig cfg;
  // One optimizer step per epoch at the default batch size; no early stop.
  cfg.epochs = 2000;
  cfg.patience = cfg.epochs;
  AmnModel model = AmnModel::init(cfg.model_config(1, tiny.channels()), tiny.feature_names, cfg.seed);
  const FitResult r = fit(model, tiny, tiny, cfg);
  Index reached = -1;
  for (const auto& h : r.history) {
    if (h.val.loss_mod < 1e-3) {
      reached = h.steps;
      break;
    }
  }
  const Index steps = r.history.back().steps;
  const double final_mse = evaluate_loss(model, tiny).loss_mod;
  detail("%ld samples, %ld steps, MSE < 1e-3 first at step %ld", static_cast<long>(tiny.size()),
         static_cast<long>(steps), static_cast<long>(reached));
  return {steps <= 2000 && final_mse < 1e-3, format("train MSE %.2e after %ld steps", final_mse, static_cast<long>(steps))};
}

Verdict metric_oracles() {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> len(2, 100), level(0, 10);
  std::bernoulli_distribution coin(0.5);
  int instances = 0, auc_mismatch = 0;
  while (instances < 500) {
    const int n = len(rng);
    V y(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      y[i] = coin(rng) ? 1.0 : 0.0;
      p[i] = level(rng) / 10.0;
    }
    double credit = 0.0, pairs = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y[i] == 1.0 && y[j] == 0.0) {
          pairs += 1.0;
          credit += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
        }
    if (pairs == 0.0) continue;
    if (auc(y, p) != credit / pairs) ++auc_mismatch;
    ++instances;
  }
  struct Fixture {
    const char* name;
    double got;
    double want;
  };
  const Fixture fixtures[] = {
      {"smape exact", smape(V{1, 2, 3}, V{1, 2, 3}), 0.0},
      {"smape {1,1}/{1,3}", smape(V{1, 1}, V{1, 3}), 0.5},
      {"smape {2,4,0}/{1,4,0}", smape(V{2, 4, 0}, V{1, 4, 0}), 2.0 / 9.0},
      {"mase {1,2}/{2,3}", mase(V{1, 2}, V{2, 3}, V{1, 2, 3}), 1.0},
      {"mase {3,5}/{4,3}", mase(V{3, 5}, V{4, 3}, V{0, 2, 6}), 0.5},
      {"wape {1,3}/{2,2}", wape(V{1, 3}, V{2, 2}), 0.5},
      {"wape {-2,4}/{0,4}", wape(V{-2, 4}, V{0, 4}), 1.0 / 3.0},
  };
  int fixture_fail = 0;
  for (const auto& f : fixtures) {
    if (std::abs(f.got - f.want) > 1e-12) {
      ++fixture_fail;
      detail("%s: got %.17g want %.17g", f.name, f.got, f.want);
    }
  }
  detail("auc: %d instances, %d mismatches; %zu regression fixtures", instances, auc_mismatch,
         std::size(fixtures));
  return {auc_mismatch == 0 && fixture_fail == 0,
          format("%d auc mismatches, %d fixture failures", auc_mismatch, fixture_fail)};
}

Verdict scheduler() {
  int failures = 0;
  int schedules = 0;
  for (Index total : {Index{2}, Index{10}, Index{97}, Index{1000}, Index{15700}}) {
    for (double frac : {0.0, 0.05, 0.2}) {
      for (double lr : {1e-3, 2e-3, 0.1}) {
        ++schedules;
        const Index w = warmup_steps(total, frac);
        bool ok = cosine_warmup_lr(0, total, lr, frac) == (w == 0 ? lr : 0.0);
        ok = ok && std::abs(cosine_warmup_lr(w, total, lr, frac) - lr) <= 1e-15 * lr;
        ok = ok && cosine_warmup_lr(total - 1, total, lr, frac) <= 1e-8 * lr;
        double prev = cosine_warmup_lr(0, total, lr, frac);
        for (Index s = 1; s < total; ++s) {
          const double cur = cosine_warmup_lr(s, total, lr, frac);
          ok = ok && (s <= w ? cur >= prev : cur <= prev);
          prev = cur;
        }
        if (!ok) {
          ++failures;
          detail("total %ld warm-up %.2f lr %g violates the contract", static_cast<long>(total), frac, lr);
        }
      }
    }
  }

  // The rate actually applied by fit() follows the same curve.
  SyntheticSpec spec;
  spec.length = 300;
  spec.seed = 5;
  const PreparedData prep = synthetic_set(spec);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.patience = cfg.epochs;
  cfg.batch_size = 32;
  cfg.rnn_hidden = 8;
  cfg.d_model = 8;
  cfg.module_h1 = 8;
  cfg.module_h2 = 4;
  const Trained t = train(prep, cfg);
  const Index total = t.fit.history.back().steps;
  for (const auto& h : t.fit.history) {
    if (h.lr != cosine_warmup_lr(h.steps - 1, total, cfg.initial_lr, cfg.warmup_fraction)) ++failures;
  }
  const double last = t.fit.history.back().lr;
  if (last > 1e-8 * cfg.initial_lr) ++failures;
  detail("%d schedules checked step by step; training run of %ld steps ends at lr %.1e", schedules,
         static_cast<long>(total), last);
  return {failures == 0, format("%d violations", failures)};
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / "amn-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  SyntheticSpec spec;
  spec.length = 600;
  spec.seed = 11;
  const PreparedData prep = synthetic_set(spec);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.n_features = 4;
  cfg.selection_epoch = 5;
  cfg.seed = 3;

  std::ostringstream ha, hb;
  Trained a = train(prep, cfg, &ha);
  Trained b = train(prep, cfg, &hb);
  const bool same_history = ha.str() == hb.str() && !ha.str().empty();
  const std::string hash_a = checkpoint_hash(checkpoint_json(a.model, prep.manifest));
  const bool same_hash = hash_a == checkpoint_hash(checkpoint_json(b.model, prep.manifest));
  detail("history %s (%zu bytes), checkpoint sha256 %s", same_history ? "identical" : "DIFFERS",
         ha.str().size(), hash_a.substr(0, 16).c_str());

  save_checkpoint(dir / "checkpoint.json", a.model, prep.manifest);
  const LoadedCheckpoint back = load_checkpoint(dir / "checkpoint.json");
  const auto sa = a.model.snapshot(), sb = back.model.snapshot();
  bool bit_exact = sa.params.size() == sb.params.size() && sa.mean_weights == sb.mean_weights &&
                   back.model.active() == a.model.active();
  std::size_t values = 0;
  for (const auto& [name, v] : sa.params) {
    const auto it = sb.params.find(name);
    bit_exact = bit_exact && it != sb.params.end() && it->second == v;
    values += static_cast<std::size_t>(v.size());
  }
  bit_exact = bit_exact && checkpoint_hash(checkpoint_json(back.model, back.manifest)) == hash_a;
  detail("round trip of %zu parameter tensors (%zu values): %s", sa.params.size(), values,
         bit_exact ? "bit-exact" : "MISMATCH");

  write_explanation(explain(a.model, prep.train, prep.test, prep.manifest.norm), dir / "run1");
  write_explanation(explain(b.model, prep.train, prep.test, prep.manifest.norm), dir / "run2");
  write_explanation(explain(back.model, prep.train, prep.test, back.manifest.norm), dir / "run3");
  const std::string e1 = slurp(dir / "run1" / "explanation.json");
  const bool stable = !e1.empty() && e1 == slurp(dir / "run2" / "explanation.json") &&
                      e1 == slurp(dir / "run3" / "explanation.json");
  detail("explanation.json %s across reruns and reload (%zu bytes)", stable ? "byte-identical" : "DIFFERS",
         e1.size());
  fs::remove_all(dir);
  return {same_history && same_hash && bit_exact && stable,
          format("history %s, hash %s, round trip %s, explanation %s", same_history ? "ok" : "bad",
                 same_hash ? "ok" : "bad", bit_exact ? "ok" : "bad", stable ? "ok" : "bad")};
}

}  // namespace
}  // namespace amn

int main(int argc, char** argv) {
  using namespace amn;
  CLI::App app{"amn acceptance suite"};
  std::vector<int> only, allow_fail;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--allow-fail", allow_fail, "Criteria whose FAIL does not fail the exit code")
      ->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "gradient oracle", gradient_oracle},
      {2, "AFS invariants", afs_invariants},
      {3, "additivity", additivity},
      {4, "head ordering (regression)", head_ordering},
      {5, "selection gain n=10 vs n=21", selection_gain},
      {6, "planted relevance recovery", relevance_recovery},
      {7, "shape fidelity", shape_fidelity},
      {8, "overfit sanity", overfit},
      {9, "metric oracles", metric_oracles},
      {10, "scheduler contract", scheduler},
      {11, "determinism and persistence", determinism},
  };
  const std::set<int> waived(allow_fail.begin(), allow_fail.end());
  int passed = 0, failed = 0, blocking = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    std::printf("[%d] %s\n", c.id, c.name.c_str());
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %2d %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                v.summary.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (v.pass) {
      ++passed;
    } else {
      ++failed;
      if (!waived.contains(c.id)) ++blocking;
    }
  }
  std::printf("%d passed, %d failed (%d not in --allow-fail)\n", passed, failed, blocking);
  return blocking == 0 ? 0 : 1;
}
