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

// Binary classification metrics. A score s is classified positive when
// s >= threshold (ties at the threshold go to the positive class).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kdlite {

struct ScoredSample {
  std::uint32_t id = 0;
  double score = 0.0;  // probability of the positive class, in [0, 1]
  int label = 0;       // 0 or 1
};

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline constexpr double kDefaultThreshold = 0.5;

/// Throws DataError on a non-finite score outside [0, 1] or a non-binary label.
void check_samples(std::span<const ScoredSample> samples);

double accuracy(std::span<const ScoredSample> samples, double threshold = kDefaultThreshold);

ConfusionMatrix confusion_matrix(std::span<const ScoredSample> samples,
                                 double threshold = kDefaultThreshold);

/// Mann-Whitney estimate (ties count one half), O(n log n) via midranks.
/// Throws ContractError unless both classes are present.
double roc_auc(std::span<const ScoredSample> samples);

/// Pairwise O(n^2) reference for roc_auc.
double roc_auc_bruteforce(std::span<const ScoredSample> samples);

/// Average precision: samples ranked by descending score, ties by ascending
/// id; sum over positives of precision at their rank, divided by the number
/// of positives. Throws ContractError when there are no positives.
double pr_auc(std::span<const ScoredSample> samples);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

struct EvalReport {
  std::size_t samples = 0;
  double threshold = kDefaultThreshold;
  double accuracy = 0.0;
  double roc_auc = 0.0;  // NaN when a class is missing
  double pr_auc = 0.0;   // NaN when there are no positives
  ConfusionMatrix confusion;
  /// Filled for fold-wise evaluation.
  std::vector<std::string> fold_names;
  std::vector<double> fold_accuracy, fold_roc_auc, fold_pr_auc;
  MeanStd accuracy_ms, roc_auc_ms, pr_auc_ms;
};

EvalReport evaluate_scores(std::span<const ScoredSample> samples,
                           double threshold = kDefaultThreshold);

/// Per-fold metrics plus mean +/- std across folds; the pooled metrics cover
/// all samples. `fold_of[i]` names the fold of samples[i].
EvalReport evaluate_folds(std::span<const ScoredSample> samples,
                          std::span<const std::string> fold_of,
                          double threshold = kDefaultThreshold);

std::string to_json(const EvalReport& report);
std::string to_table(const EvalReport& report);
/// 2x2 table: rows are the actual class, columns the predicted class.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace kdlite
