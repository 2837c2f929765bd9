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

#include "kdlite/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "kdlite/errors.hpp"

namespace kdlite {

void check_samples(std::span<const ScoredSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw DataError("sample " + std::to_string(s.id) + " has score outside [0, 1]");
    }
    if (s.label != 0 && s.label != 1) {
      throw DataError("sample " + std::to_string(s.id) + " has a non-binary label");
    }
  }
}

ConfusionMatrix confusion_matrix(std::span<const ScoredSample> samples, double threshold) {
  check_samples(samples);
  ConfusionMatrix cm;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    if (s.label == 1) {
      (predicted ? cm.tp : cm.fn)++;
    } else {
      (predicted ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

double accuracy(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw ContractError("accuracy of an empty sample set");
  const auto cm = confusion_matrix(samples, threshold);
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double roc_auc(std::span<const ScoredSample> samples) {
  check_samples(samples);
  const std::size_t n = samples.size();
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.label == 1;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw ContractError("roc_auc is undefined without both classes");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  // Sum of (1-based) midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && samples[order[j]].score == samples[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].label == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double roc_auc_bruteforce(std::span<const ScoredSample> samples) {
  check_samples(samples);
  double wins = 0.0;
  std::size_t pairs = 0;
  for (const auto& pos : samples) {
    if (pos.label != 1) continue;
    for (const auto& neg : samples) {
      if (neg.label != 0) continue;
      ++pairs;
      if (pos.score > neg.score) {
        wins += 1.0;
      } else if (pos.score == neg.score) {
        wins += 0.5;
      }
    }
  }
  if (pairs == 0) throw ContractError("roc_auc is undefined without both classes");
  return wins / static_cast<double>(pairs);
}

double pr_auc(std::span<const ScoredSample> samples) {
  check_samples(samples);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].score != samples[b].score) return samples[a].score > samples[b].score;
    return samples[a].id < samples[b].id;
  });
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.label == 1;
  if (positives == 0) throw ContractError("pr_auc is undefined without positives");
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (samples[order[rank]].label != 1) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(positives);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double s = 0.0;
  for (double v : values) s += v;
  out.mean = s / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

namespace {

double safe_roc(std::span<const ScoredSample> s) {
  try {
    return roc_auc(s);
  } catch (const ContractError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double safe_pr(std::span<const ScoredSample> s) {
  try {
    return pr_auc(s);
  } catch (const ContractError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

EvalReport evaluate_scores(std::span<const ScoredSample> samples, double threshold) {
  EvalReport r;
  r.samples = samples.size();
  r.threshold = threshold;
  r.confusion = confusion_matrix(samples, threshold);
  r.accuracy = accuracy(samples, threshold);
  r.roc_auc = safe_roc(samples);
  r.pr_auc = safe_pr(samples);
  return r;
}

EvalReport evaluate_folds(std::span<const ScoredSample> samples,
                          std::span<const std::string> fold_of, double threshold) {
  if (fold_of.size() != samples.size()) {
    throw ContractError("evaluate_folds: one fold name per sample required");
  }
  EvalReport r = evaluate_scores(samples, threshold);
  std::map<std::string, std::vector<ScoredSample>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[fold_of[i]].push_back(samples[i]);
  for (const auto& [name, group] : groups) {
    r.fold_names.push_back(name);
    r.fold_accuracy.push_back(accuracy(group, threshold));
    r.fold_roc_auc.push_back(safe_roc(group));
    r.fold_pr_auc.push_back(safe_pr(group));
  }
  r.accuracy_ms = mean_std(r.fold_accuracy);
  r.roc_auc_ms = mean_std(r.fold_roc_auc);
  r.pr_auc_ms = mean_std(r.fold_pr_auc);
  return r;
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["samples"] = report.samples;
  j["threshold"] = report.threshold;
  j["accuracy"] = number_or_null(report.accuracy);
  j["roc_auc"] = number_or_null(report.roc_auc);
  j["pr_auc"] = number_or_null(report.pr_auc);
  j["confusion"] = {{"tp", report.confusion.tp},
                    {"fp", report.confusion.fp},
                    {"tn", report.confusion.tn},
                    {"fn", report.confusion.fn}};
  if (!report.fold_names.empty()) {
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t i = 0; i < report.fold_names.size(); ++i) {
      folds.push_back({{"fold", report.fold_names[i]},
                       {"accuracy", number_or_null(report.fold_accuracy[i])},
                       {"roc_auc", number_or_null(report.fold_roc_auc[i])},
                       {"pr_auc", number_or_null(report.fold_pr_auc[i])}});
    }
    j["folds"] = folds;
    auto ms = [](const MeanStd& m) {
      return nlohmann::json{{"mean", number_or_null(m.mean)}, {"std", number_or_null(m.stddev)}};
    };
    j["fold_summary"] = {{"accuracy", ms(report.accuracy_ms)},
                         {"roc_auc", ms(report.roc_auc_ms)},
                         {"pr_auc", ms(report.pr_auc_ms)}};
  }
  return j.dump(2) + "\n";
}

std::string to_table(const EvalReport& report) {
  char line[160];
  std::ostringstream os;
  auto pct = [](double v) { return 100.0 * v; };
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s\n", "", "Accuracy", "ROC-AUC", "PR-AUC");
  os << line;
  for (std::size_t i = 0; i < report.fold_names.size(); ++i) {
    std::snprintf(line, sizeof line, "%-10s %10.2f %10.2f %10.2f\n", report.fold_names[i].c_str(),
                  pct(report.fold_accuracy[i]), pct(report.fold_roc_auc[i]),
                  pct(report.fold_pr_auc[i]));
    os << line;
  }
  if (!report.fold_names.empty()) {
    std::snprintf(line, sizeof line, "%-10s %5.2f+-%4.2f %5.2f+-%4.2f %5.2f+-%4.2f\n", "folds",
                  pct(report.accuracy_ms.mean), pct(report.accuracy_ms.stddev),
                  pct(report.roc_auc_ms.mean), pct(report.roc_auc_ms.stddev),
                  pct(report.pr_auc_ms.mean), pct(report.pr_auc_ms.stddev));
    os << line;
  }
  std::snprintf(line, sizeof line, "%-10s %10.2f %10.2f %10.2f\n", "all", pct(report.accuracy),
                pct(report.roc_auc), pct(report.pr_auc));
  os << line;
  const auto& cm = report.confusion;
  os << "\nconfusion (threshold " << report.threshold << ")\n";
  std::snprintf(line, sizeof line, "%-14s %12s %12s\n", "actual\\pred", "negative", "positive");
  os << line;
  std::snprintf(line, sizeof line, "%-14s %12zu %12zu\n", "negative", cm.tn, cm.fp);
  os << line;
  std::snprintf(line, sizeof line, "%-14s %12zu %12zu\n", "positive", cm.fn, cm.tp);
  os << line;
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "actual,predicted_negative,predicted_positive\n";
  os << "negative," << cm.tn << ',' << cm.fp << '\n';
  os << "positive," << cm.fn << ',' << cm.tp << '\n';
  return os.str();
}

}  // namespace kdlite
