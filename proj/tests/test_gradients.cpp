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

#include <gtest/gtest.h>

#include <cctype>
#include <numeric>

#include "kdlite/gradient_suite.hpp"

namespace kdlite {
namespace {

class GradientSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradientSuite, PassesOverTwentySeeds) {
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 100);
  for (const auto& c : gradient_cases()) {
    if (c.name != GetParam()) continue;
    for (auto seed : seeds) {
      GradCheckOptions o;
      o.seed = seed;
      const auto report = c.run(seed, o);
      EXPECT_TRUE(report.passed) << c.name << " seed " << seed << ": " << report.summary();
      EXPECT_GT(report.coordinates_checked, 0u);
    }
  }
}

std::vector<std::string> case_names() {
  std::vector<std::string> names;
  for (const auto& c : gradient_cases()) names.push_back(c.name);
  return names;
}

INSTANTIATE_TEST_SUITE_P(Ops, GradientSuite, ::testing::ValuesIn(case_names()),
                         [](const auto& info) {
                           std::string s = info.param;
                           for (auto& ch : s)
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           return s;
                         });

TEST(GradientSuiteRunner, FilterSelectsCases) {
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto results = run_gradient_suite(seeds, {}, "dense.");
  ASSERT_EQ(results.size(), 6u);
  for (const auto& r : results) EXPECT_EQ(r.name.rfind("dense.", 0), 0u);
}

}  // namespace
}  // namespace kdlite
