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

#include "kdlite/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "kdlite/random.hpp"

namespace kdlite {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << ": worst error " << worst_error << " at "
     << worst_index << " (analytic " << analytic_at_worst << ", numeric "
     << numeric_at_worst << ") over " << coordinates_checked << " coordinates";
  return os.str();
}

GradCheckReport finite_difference_check(const ScalarFunction& f,
                                        const Tensor<double>& point,
                                        const GradCheckOptions& options) {
  Tensor<double> x = point.clone();
  x.set_requires_grad(true);
  x.zero_grad();
  const Tensor<double> loss = f(x);
  backward(loss);
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates != 0 && options.max_coordinates < coords.size()) {
    Rng rng(options.seed);
    shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  Tensor<double> probe = point.detach();
  const double h = options.step;
  for (const std::size_t i : coords) {
    const double original = probe.data()[i];
    probe.data()[i] = original + h;
    const double plus = f(probe).item();
    probe.data()[i] = original - h;
    const double minus = f(probe).item();
    probe.data()[i] = original;

    const double numeric = (plus - minus) / (2.0 * h);
    const double a = analytic[i];
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    ++report.coordinates_checked;
    if (!(err <= report.worst_error) || report.coordinates_checked == 1) {
      report.worst_error = err;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = std::isfinite(report.worst_error) &&
                  report.worst_error < options.tolerance;
  return report;
}

}  // namespace kdlite
