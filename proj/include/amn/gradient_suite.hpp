// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "amn/grad_check.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amn {

struct GradCheckRow {
  std::string group;  // "primitive", "layer" or "model"
  std::string name;
  std::size_t entries = 0;  // perturbed input entries
  GradCheckReport report;
};

/// Finite-difference check of every primitive, every layer and the full
/// model forward on small random inputs (64-bit, central differences).
std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed = 7, double eps = 1e-5);

}  // namespace amn
