// SPDX-License-Identifier: Apache-2.0
#include "amn/gradient_suite.hpp"

#include "amn/afs.hpp"
#include "amn/layers.hpp"
#include "amn/model.hpp"
#include "amn/modular.hpp"
#include "amn/ops.hpp"
#include "amn/train.hpp"

#include <random>

namespace amn {

namespace {

Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  Index size = 1;
  for (Index e : shape) size *= e;
  Vector v(size);
  for (Index i = 0; i < size; ++i) v[i] = u(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Fixed random projection to a scalar, so no output entry is weighted alike.
Tensor project(const Tensor& out) {
  Rng rng(0x5eed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Vector w(out.size());
  for (Index i = 0; i < w.size(); ++i) w[i] = (i % 2 ? -1.0 : 1.0) * u(rng);
  return sum(out * Tensor(out.shape(), std::move(w)));
}

class Suite {
 public:
  Suite(std::uint64_t seed, double eps) : rng_(seed), eps_(eps) {}

  Rng& rng() { return rng_; }

  void add(const std::string& group, const std::string& name, std::vector<Tensor> inputs,
           const std::function<Tensor(std::span<const Tensor>)>& f) {
    GradCheckRow row;
    row.group = group;
    row.name = name;
    for (const auto& t : inputs) row.entries += static_cast<std::size_t>(t.size());
    row.report = grad_check_report([&](std::span<const Tensor> in) { return project(f(in)); },
                                   inputs, eps_);
    rows_.push_back(std::move(row));
  }

  std::vector<GradCheckRow> take() { return std::move(rows_); }

 private:
  Rng rng_;
  double eps_;
  std::vector<GradCheckRow> rows_;
};

void primitives(Suite& s) {
  Rng& r = s.rng();
  const std::string g = "primitive";
  s.add(g, "add (broadcast)", {uniform({2, 3, 4}, r, -1, 1), uniform({4}, r, -1, 1)},
        [](auto in) { return in[0] + in[1]; });
  s.add(g, "sub (broadcast)", {uniform({3, 4}, r, -1, 1), uniform({4}, r, -1, 1)},
        [](auto in) { return in[0] - in[1]; });
  s.add(g, "mul", {uniform({3, 4}, r, -1, 1), uniform({3, 4}, r, -1, 1)},
        [](auto in) { return in[0] * in[1]; });
  s.add(g, "div", {uniform({3, 4}, r, -1, 1), uniform({3, 4}, r, 0.5, 2)},
        [](auto in) { return in[0] / in[1]; });
  s.add(g, "scalar ops", {uniform({5}, r, -1, 1)},
        [](auto in) { return 2.5 - (in[0] * 3.0 + 1.0) / 4.0; });
  s.add(g, "matmul", {uniform({3, 3}, r, -1, 1), uniform({3, 3}, r, -1, 1)},
        [](auto in) { return matmul(in[0], in[1]); });
  s.add(g, "matmul (batched)", {uniform({2, 3, 4}, r, -1, 1), uniform({4, 2}, r, -1, 1)},
        [](auto in) { return matmul(in[0], in[1]); });
  s.add(g, "matmul (batch x batch)", {uniform({2, 3, 4}, r, -1, 1), uniform({2, 4, 3}, r, -1, 1)},
        [](auto in) { return matmul(in[0], in[1]); });
  s.add(g, "transpose", {uniform({2, 3, 4}, r, -1, 1)}, [](auto in) { return transpose(in[0]); });
  s.add(g, "reshape", {uniform({2, 6}, r, -1, 1)}, [](auto in) { return reshape(in[0], {3, 4}); });
  s.add(g, "broadcast_to", {uniform({4}, r, -1, 1)},
        [](auto in) { return broadcast_to(in[0], {3, 4}); });
  s.add(g, "concat", {uniform({2, 3}, r, -1, 1), uniform({2, 2}, r, -1, 1)},
        [](auto in) { return concat(in, 1); });
  s.add(g, "slice", {uniform({3, 5}, r, -1, 1)}, [](auto in) { return slice(in[0], 1, 1, 3); });
  s.add(g, "select", {uniform({3, 4}, r, -1, 1)}, [](auto in) { return select(in[0], 0, 2); });
  s.add(g, "sum", {uniform({3, 4}, r, -1, 1)}, [](auto in) { return sum(in[0]) * sum(in[0]); });
  s.add(g, "mean", {uniform({3, 4}, r, -1, 1)}, [](auto in) { return mean(in[0]) * mean(in[0]); });
  s.add(g, "sum over axis", {uniform({2, 3, 4}, r, -1, 1)},
        [](auto in) { return square(sum(in[0], 1)); });
  s.add(g, "mean over axis", {uniform({2, 3, 4}, r, -1, 1)},
        [](auto in) { return square(mean(in[0], -1)); });
  s.add(g, "sigmoid", {uniform({6}, r, -3, 3)}, [](auto in) { return sigmoid(in[0]); });
  s.add(g, "tanh", {uniform({6}, r, -3, 3)}, [](auto in) { return tanh(in[0]); });
  // Kept away from the kink at zero.
  s.add(g, "relu", {uniform({6}, r, 0.1, 1)}, [](auto in) { return relu(in[0] - 0.5); });
  s.add(g, "exp", {uniform({6}, r, -2, 2)}, [](auto in) { return exp(in[0]); });
  s.add(g, "log", {uniform({6}, r, 0.2, 3)}, [](auto in) { return log(in[0]); });
  s.add(g, "square", {uniform({6}, r, -2, 2)}, [](auto in) { return square(in[0]); });
  s.add(g, "sqrt", {uniform({6}, r, 0.2, 3)}, [](auto in) { return sqrt(in[0]); });
  s.add(g, "softmax", {uniform({3, 5}, r, -2, 2)}, [](auto in) { return softmax(in[0]); });
  s.add(g, "softmax of relu", {uniform({6}, r, -1, 1)},
        [](auto in) { return softmax(relu(in[0])); });
  const std::vector<double> labels{0, 1, 1, 0};
  const Tensor targets = Tensor::from_values({4}, labels);
  s.add(g, "bce_with_logits", {uniform({4}, r, -3, 3)},
        [targets](auto in) { return bce_with_logits(in[0], targets); });
}

std::vector<Tensor> tensors(const ParameterList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

// Zero-initialized biases put relu inputs exactly on the kink, where central
// differences see half a slope; checks run at a nearby generic point.
void jitter(std::vector<Tensor>& params, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& t : params) {
    for (Index i = 0; i < t.size(); ++i) t.values()[i] += u(rng);
  }
}

template <typename Params>
std::vector<Tensor> with_params(std::vector<Tensor> leading, const Params& p, Rng& rng) {
  ParameterList list;
  p.collect("p", list);
  std::vector<Tensor> params = tensors(list);
  jitter(params, rng);
  leading.insert(leading.end(), params.begin(), params.end());
  return leading;
}

void layers(Suite& s) {
  Rng& r = s.rng();
  const std::string g = "layer";

  const LinearParams lin = LinearParams::xavier(4, 3, r);
  s.add(g, "linear", with_params({uniform({2, 4}, r, -1, 1)}, lin, r),
        [lin](auto in) { return linear(in[0], lin); });

  LayerNormParams norm = LayerNormParams::identity(5);
  norm.gain = uniform({5}, r, 0.5, 1.5);
  norm.bias = uniform({5}, r, -0.5, 0.5);
  s.add(g, "layer_norm", with_params({uniform({3, 5}, r, -2, 2)}, norm, r),
        [norm](auto in) { return layer_norm(in[0], norm); });

  ExuParams exu_p = ExuParams::init(1, 4, r);
  exu_p.weight = uniform({1, 4}, r, -0.5, 0.5);
  exu_p.bias = uniform({1}, r, -0.2, 0.2);
  s.add(g, "exu", with_params({uniform({3, 1}, r, 0.5, 1.5)}, exu_p, r),
        [exu_p](auto in) { return exu(in[0], exu_p); });

  const LstmParams lstm = LstmParams::xavier(2, 3, r);
  s.add(g, "lstm_step",
        with_params({uniform({2, 2}, r, -1, 1), uniform({2, 3}, r, -1, 1), uniform({2, 3}, r, -1, 1)},
                    lstm, r),
        [lstm](auto in) {
          const LstmState st = lstm_step(in[0], in[1], in[2], lstm);
          return st.h * 2.0 + st.c;
        });
  const GruParams gru = GruParams::xavier(2, 3, r);
  s.add(g, "gru_step", with_params({uniform({2, 2}, r, -1, 1), uniform({2, 3}, r, -1, 1)}, gru, r),
        [gru](auto in) { return gru_step(in[0], in[1], gru); });

  s.add(g, "scaled_dot_attention",
        {uniform({2, 3, 4}, r, -1, 1), uniform({2, 3, 4}, r, -1, 1), uniform({2, 3, 2}, r, -1, 1)},
        [](auto in) {
          const AttentionResult a = scaled_dot_attention(in[0], in[1], in[2]);
          return concat(std::vector<Tensor>{reshape(a.output, {12}), reshape(a.attention, {18})}, 0);
        });

  const AfsParams afs = AfsParams::xavier(3, 4, 2, r);
  s.add(g, "afs_forward", with_params({uniform({2, 3, 4}, r, -1, 1)}, afs, r), [afs](auto in) {
    const AfsOutput o = afs_forward(in[0], afs);
    return concat(std::vector<Tensor>{reshape(o.weights, {6}), reshape(o.aux_prediction, {2})}, 0);
  });

  AnbState anb{uniform({1, 4}, r, -1, 1), uniform({4}, r, -0.3, 0.3), uniform({1}, r, 0.2, 0.6)};
  s.add(g, "anb_forward", {uniform({3, 1}, r, 0.5, 1.5), anb.w_init, anb.bias, anb.f},
        [](auto in) { return anb_forward(in[0], {in[1], in[2], in[3]}); });

  for (UnitKind unit : {UnitKind::kAnb, UnitKind::kLinear, UnitKind::kExu}) {
    FeatureModule m = FeatureModule::init(unit, 4, 3, 0.0, r);
    if (unit == UnitKind::kExu) m.unit_weight = uniform({1, 4}, r, -0.5, 0.5);
    ParameterList list;
    m.collect("m", list);
    std::vector<Tensor> inputs{uniform({3, 1}, r, -1, 1), uniform({1}, r, 0.2, 0.6)};
    std::vector<Tensor> params = tensors(list);
    jitter(params, r);
    inputs.insert(inputs.end(), params.begin(), params.end());
    s.add(g, "module_forward (" + to_string(unit) + ")", inputs, [m](auto in) {
      Rng unused(0);
      return module_forward(in[0], m, in[1], true, unused);
    });
  }
}

void model(Suite& s, RnnKind rnn, UnitKind unit, Task task) {
  ModelConfig c;
  c.task = task;
  c.rnn = rnn;
  c.unit = unit;
  c.window = 2;
  c.channels = 2;
  c.rnn_hidden = 3;
  c.d_model = 4;
  c.num_heads = 2;
  c.module_h1 = 4;
  c.module_h2 = 3;
  c.n_features = 2;
  AmnModel m = AmnModel::init(c, {"a_t0", "b_t0", "a_t1", "b_t1"}, 11);
  Rng& r = s.rng();
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  RowMatrix x(3, 4);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = u(r);
  Vector y(3);
  for (Index i = 0; i < 3; ++i) y[i] = task == Task::kClassification ? double(i % 2) : u(r);
  m.set_mean_weights(mean_feature_weights(m, x));
  m.freeze_selection();

  std::vector<Tensor> params = tensors(m.parameters());
  jitter(params, r);
  if (unit == UnitKind::kExu) {
    // Log-scale weights near zero keep the check well conditioned.
    for (const auto& p : m.parameters()) {
      if (p.name.find("unit_weight") != std::string::npos) {
        Tensor t = p.tensor;
        t.values() *= 0.1;
      }
    }
  }
  s.add("model",
        "amn forward " + to_string(rnn) + "/" + to_string(unit) + " " + to_string(task), params,
        [&m, x, y](auto) {
          Rng unused(0);
          return joint_loss(m.forward(x, true, unused), y, m.config().task).total;
        });
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed, double eps) {
  Suite s(seed, eps);
  primitives(s);
  layers(s);
  model(s, RnnKind::kLstm, UnitKind::kAnb, Task::kRegression);
  model(s, RnnKind::kGru, UnitKind::kLinear, Task::kClassification);
  model(s, RnnKind::kLstm, UnitKind::kExu, Task::kRegression);
  return s.take();
}

}  // namespace amn
