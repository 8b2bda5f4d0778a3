// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/tensor.hpp"

#include <functional>
#include <span>

namespace amn {

using TensorFunction = std::function<Tensor(std::span<const Tensor>)>;

struct GradCheckReport {
  double max_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// differences with step `eps`. The error per entry is
/// |analytic - numeric| / max(1, |numeric|). Inputs are perturbed in place and
/// restored; their gradients are cleared. Non-finite intermediates raise
/// NumericError.
GradCheckReport grad_check_report(const TensorFunction& f, std::span<Tensor> inputs,
                                  double eps = 1e-5);

inline double grad_check(const TensorFunction& f, std::span<Tensor> inputs,
                         double eps = 1e-5) {
  return grad_check_report(f, inputs, eps).max_error;
}

}  // namespace amn
