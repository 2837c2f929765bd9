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

#include <cstdint>
#include <functional>
#include <string>

#include "kdlite/tensor.hpp"

namespace kdlite {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// 0 checks every coordinate; otherwise a seeded random subsample.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  bool passed = true;
  /// |analytic - numeric| / max(1, |analytic|, |numeric|)
  double worst_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates_checked = 0;

  std::string summary() const;
};

using ScalarFunction = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the gradient from backward() with central differences
/// (f(x + h) - f(x - h)) / 2h. `f` must be deterministic: any randomness
/// inside it has to be reseeded on every call.
GradCheckReport finite_difference_check(const ScalarFunction& f,
                                        const Tensor<double>& point,
                                        const GradCheckOptions& options = {});

}  // namespace kdlite
