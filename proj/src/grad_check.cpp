// SPDX-License-Identifier: Apache-2.0
#include "amn/grad_check.hpp"

#include "amn/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace amn {

namespace {

double evaluate(const TensorFunction& f, std::span<const Tensor> inputs) {
  const Tensor out = f(inputs);
  if (out.size() != 1) {
    throw ContractError("grad_check needs a scalar-valued function, got shape " +
                        to_string(out.shape()));
  }
  return out.item();
}

}  // namespace

GradCheckReport grad_check_report(const TensorFunction& f, std::span<Tensor> inputs,
                                  double eps) {
  FiniteCheckScope checks(true);
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::vector<Vector> analytic;
  {
    const Tensor out = f(inputs);
    if (out.size() != 1) {
      throw ContractError("grad_check needs a scalar-valued function, got shape " +
                          to_string(out.shape()));
    }
    if (out.requires_grad()) backward(out);
    for (const Tensor& t : inputs) {
      analytic.push_back(t.has_grad() ? t.grad() : Vector::Zero(t.size()));
    }
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Vector& v = inputs[k].values();
    for (Index i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double fp = evaluate(f, inputs);
      v[i] = saved - eps;
      const double fm = evaluate(f, inputs);
      v[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      if (!std::isfinite(numeric)) throw NumericError("non-finite finite-difference estimate");
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_input = k;
        report.worst_entry = i;
        report.analytic = analytic[k][i];
        report.numeric = numeric;
      }
    }
  }
  for (Tensor& t : inputs) t.zero_grad();
  return report;
}

}  // namespace amn
