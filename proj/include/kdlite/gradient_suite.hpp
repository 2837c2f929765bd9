/*
 * Copyright 2026 The kdlite Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Finite-difference checks of every differentiable operator (one case per
// operator argument) and of the full distillation objective through a small
// conv / batch-norm / attention / dense network. All checks run in double
// precision.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kdlite/gradcheck.hpp"

namespace kdlite {

struct GradientCase {
  std::string name;
  std::function<GradCheckReport(std::uint64_t seed, const GradCheckOptions& options)> run;
};

/// All cases; the last one is the composite objective.
const std::vector<GradientCase>& gradient_cases();

struct GradientResult {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// Runs every case whose name contains `filter` (all when empty) for each seed.
std::vector<GradientResult> run_gradient_suite(std::span<const std::uint64_t> seeds,
                                               const GradCheckOptions& options = {},
                                               const std::string& filter = {});

}  // namespace kdlite
