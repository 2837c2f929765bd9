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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   kdlite_acceptance            all criteria
//   kdlite_acceptance 1 4 6      a selection (8 implies 7)
//
// The desk-scale run writes its comparative report, histories and models to
// $KDLITE_OUTPUT_DIR/acceptance (default ./acceptance).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kdlite/architecture.hpp"
#include "kdlite/dataset.hpp"
#include "kdlite/distillation.hpp"
#include "kdlite/gradient_suite.hpp"
#include "kdlite/metrics.hpp"
#include "kdlite/random.hpp"
#include "kdlite/serialization.hpp"
#include "kdlite/training.hpp"

namespace fs = std::filesystem;
using namespace kdlite;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const Verdict& v, double secs) {
  std::printf("CRITERION %d %s  %s: %s (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", title.c_str(),
              v.detail.c_str(), secs);
  std::fflush(stdout);
  if (!v.pass) ++g_failures;
}

void info(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void info(const char* fmt, ...) {
  std::fputs("  ", stdout);
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// 1, 2: architecture

Verdict parameter_counts() {
  const auto c = build_lighter_cnn(Profile::kFull, 0).count_parameters();
  return {c.trainable == 5350633 && c.total == 5352041,
          format("trainable %zu, total %zu", c.trainable, c.total)};
}

// Output size of every row of the published layer table, 3x300x300 input.
const std::vector<Shape> kPublishedTable = {
    {64, 147, 147}, {64, 147, 147}, {128, 140, 140}, {128, 140, 140}, {128, 69, 69},
    {128, 69, 69},  {256, 62, 62},  {256, 62, 62},   {128, 55, 55},   {128, 55, 55},
    {128, 26, 26},  {128, 26, 26},  {64, 19, 19},    {64, 19, 19},    {32, 8, 8},
    {32, 8, 8},     {32, 4, 4},     {32, 4, 4},      {512},           {32},
    {4},            {1}};

Verdict shape_table() {
  const auto shapes = compute_shapes(lighter_cnn_spec(Profile::kFull));
  std::size_t matched = 0;
  for (std::size_t i = 0; i < std::min(shapes.size(), kPublishedTable.size()); ++i) {
    if (shapes[i] == kPublishedTable[i]) {
      ++matched;
    } else {
      info("row %zu: computed %s, published %s", i + 1, to_string(shapes[i]).c_str(),
           to_string(kPublishedTable[i]).c_str());
    }
  }
  return {matched == kPublishedTable.size() && shapes.size() == kPublishedTable.size(),
          format("%zu of %zu rows match (%zu computed)", matched, kPublishedTable.size(),
                 shapes.size())};
}

// ---------------------------------------------------------------------------
// 3: gradients

Verdict gradient_suite() {
  std::vector<std::uint64_t> seeds(20);
  std::iota(seeds.begin(), seeds.end(), 1000);
  GradCheckOptions options;
  options.step = 1e-5;
  options.tolerance = 1e-6;
  const auto results = run_gradient_suite(seeds, options);
  std::set<std::string> cases, failed;
  double worst = 0.0;
  for (const auto& r : results) {
    cases.insert(r.name);
    worst = std::max(worst, r.report.worst_error);
    if (!r.report.passed) failed.insert(r.name + "@" + std::to_string(r.seed));
  }
  for (const auto& f : failed) info("failed: %s", f.c_str());
  const bool composite = std::any_of(cases.begin(), cases.end(), [](const std::string& n) {
    return n.rfind("composite.", 0) == 0;
  });
  return {failed.empty() && composite && !results.empty(),
          format("%zu cases x %zu seeds, worst relative error %.2e", cases.size(), seeds.size(),
                 worst)};
}

// ---------------------------------------------------------------------------
// 4: attention-loss invariants

double at_value(const std::vector<double>& q, const std::vector<double>& p, std::size_t h,
                std::size_t w) {
  return at_loss(Tensor<double>(Shape{h, w}, q), Tensor<double>(Shape{h, w}, p)).item();
}

Verdict at_invariants() {
  Rng rng(4);
  bool ok = true;
  double worst_scale = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q(8 * 8);
    for (auto& v : q) v = uniform(rng, 0.0, 3.0);
    for (double c : {0.1, 1.0, 1e3}) {
      std::vector<double> cq(q);
      for (auto& v : cq) v *= c;
      worst_scale = std::max(worst_scale, at_value(q, cq, 8, 8));
    }
  }
  ok = ok && worst_scale < 1e-9;

  double lo = 1e300, hi = -1e300;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t h = 1 + uniform_index(rng, 8), w = 1 + uniform_index(rng, 8);
    std::vector<double> a(h * w), b(h * w);
    // Sparse maps reach the orthogonal extreme as well as the interior.
    for (auto& v : a) v = bernoulli(rng, 0.3) ? 0.0 : uniform(rng, 0.0, 10.0);
    for (auto& v : b) v = bernoulli(rng, 0.3) ? 0.0 : uniform(rng, 0.0, 10.0);
    const double l = at_value(a, b, h, w);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  ok = ok && lo >= 0.0 && hi <= std::sqrt(2.0) + 1e-9;

  std::vector<double> e1(16, 0.0), e2(16, 0.0);
  e1[3] = 1.0;
  e2[12] = 1.0;
  const double orth = at_value(e1, e2, 4, 4);
  ok = ok && std::abs(orth - std::sqrt(2.0)) <= 1e-9;
  return {ok, format("max L(Q,cQ) %.2e; range over 1e4 pairs [%.6f, %.6f]; orthogonal %.12f",
                     worst_scale, lo, hi, orth)};
}

// ---------------------------------------------------------------------------
// 5: soft-label contract

Verdict lsr_contract() {
  const auto data = generate_synthetic_dataset(1000, kDefaultPositiveFraction, 96, 55);
  const ImageSet& set = data.images;
  TrainConfig config;
  config.profile = Profile::kReduced;
  // Enough steps for the batch-norm running statistics to settle.
  config.max_epochs = 8;
  config.batch_size = 8;
  config.seed = 55;
  config.deterministic = true;
  config.use_fixed_budget();

  // The contract does not depend on teacher quality; an untrained frozen
  // surrogate supplies the attention maps.
  Model teacher = build_surrogate_teacher(56, Profile::kReduced);
  teacher.freeze();
  const ModelTeacher mt(teacher);
  const auto subset = stratified_subset(set.labels, config.subset_fraction, config.seed);
  const ImageSet part = set.subset(subset);
  const auto student1 =
      train_at(build_lighter_cnn(Profile::kReduced, student_seed(config.seed, 1)), mt, part,
               nullptr, config);
  const auto records =
      generate_soft_labels(student1.model, set.ids, set.labels, set.pixels,
                           config.weights.temperature, config.lsr_replacement);

  // Independent oracle: misclassified iff (sigma(z) >= 1/2) != (label == 1).
  const auto logits = predict_logits(student1.model, set);
  std::set<std::uint32_t> misclassified, replaced;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
    if ((p >= 0.5) != (set.labels[i] == 1)) misclassified.insert(set.ids[i]);
  }
  std::map<std::uint32_t, int> label_of;
  for (std::size_t i = 0; i < set.size(); ++i) label_of[set.ids[i]] = set.labels[i];

  bool sums = records.size() == set.size(), values = true;
  for (const auto& r : records) {
    sums = sums && (r.p0 + r.p1 == 1.0);
    if (r.origin == SoftLabelOrigin::kReplaced) {
      replaced.insert(r.id);
      const int y = label_of.at(r.id);
      values = values && (y == 1 ? r.p1 : r.p0) == 0.6 && (y == 1 ? r.p0 : r.p1) == 1.0 - 0.6;
    }
  }
  return {sums && values && replaced == misclassified && !replaced.empty(),
          format("%zu records, %zu replaced, %zu misclassified, sums exact %s, values exact %s",
                 records.size(), replaced.size(), misclassified.size(), sums ? "yes" : "no",
                 values ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6: metric oracles

// Probability that a random positive outscores a random negative, ties 1/2.
double auc_pairs(const std::vector<ScoredSample>& s) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (const auto& a : s) {
    if (a.label != 1) continue;
    ++pos;
    for (const auto& b : s) {
      if (b.label != 0) continue;
      wins += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
    }
  }
  for (const auto& b : s) neg += b.label == 0;
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

struct ApFixture {
  std::vector<double> scores;
  std::vector<int> labels;
  double expected;
};

// Ranked by descending score, ties by ascending id; precision at every
// positive, averaged over the positives.
const ApFixture kApFixtures[] = {
    {{0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0}, 1.0},
    {{0.9, 0.8, 0.7, 0.6}, {0, 0, 1, 1}, (1.0 / 3 + 2.0 / 4) / 2},
    {{0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}, (1.0 + 2.0 / 3) / 2},
    {{0.9, 0.8, 0.7}, {0, 1, 0}, 0.5},
    {{0.1, 0.9, 0.5}, {1, 0, 0}, 1.0 / 3},
    {{0.5}, {1}, 1.0},
    {{0.4, 0.3, 0.2, 0.1, 0.05}, {1, 0, 0, 0, 1}, (1.0 + 2.0 / 5) / 2},
    {{0.7, 0.7, 0.7}, {0, 1, 1}, (1.0 / 2 + 2.0 / 3) / 2},
    {{0.2, 0.6, 0.6, 0.9}, {1, 1, 0, 1}, (1.0 + 2.0 / 2 + 3.0 / 4) / 3},
    {{0.3, 0.8, 0.1, 0.5, 0.9, 0.2}, {0, 1, 1, 0, 1, 0}, (1.0 + 1.0 + 3.0 / 6) / 3},
};

Verdict metric_oracles() {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 499);
    // Coarse grids on some trials force ties.
    const double grid = trial % 3 == 0 ? 10.0 : 0.0;
    std::vector<ScoredSample> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      double v = uniform01(rng);
      if (grid > 0) v = std::round(v * grid) / grid;
      s[i] = {static_cast<std::uint32_t>(i), v, bernoulli(rng, 0.4) ? 1 : 0};
    }
    s[0].label = 1;
    s[1].label = 0;
    worst = std::max(worst, std::abs(roc_auc(s) - auc_pairs(s)));
  }
  int exact = 0;
  for (const auto& f : kApFixtures) {
    std::vector<ScoredSample> s;
    for (std::size_t i = 0; i < f.scores.size(); ++i) {
      s.push_back({static_cast<std::uint32_t>(i), f.scores[i], f.labels[i]});
    }
    exact += pr_auc(s) == f.expected;
  }
  return {worst <= 1e-9 && exact == 10,
          format("roc_auc max deviation %.2e over 200 sets; pr_auc exact on %d of 10 fixtures",
                 worst, exact)};
}

// ---------------------------------------------------------------------------
// 7, 8: desk-scale pipeline

struct Row {
  std::string name;
  double accuracy = 0.0, roc_auc = 0.0, pr_auc = 0.0;
};

struct DeskRun {
  std::map<std::string, std::vector<std::uint8_t>> models;
  std::map<std::string, std::string> histories;
  std::vector<Row> rows;
  EvalReport cv;
  double baseline_accuracy = 0.0;
  double at_first = 0.0, at_last = 0.0;
  double student1_accuracy = 0.0, student2_accuracy = 0.0;
  std::size_t replaced = 0, soft_labels = 0;
  double seconds = 0.0;
};

constexpr std::uint64_t kDeskSeed = 2024;

TrainConfig desk_config(std::size_t epochs, std::uint64_t seed) {
  TrainConfig c;
  c.profile = Profile::kReduced;
  c.max_epochs = epochs;
  c.seed = seed;
  c.deterministic = true;
  c.workers = 1;
  c.use_fixed_budget();
  return c;
}

Row test_row(const std::string& name, const Model& model, const ImageSet& test) {
  const auto r = evaluate_model(model, test).report;
  return {name, r.accuracy, r.roc_auc, r.pr_auc};
}

EpochCallback progress(const std::string& tag) {
  return [tag](const EpochRecord& e) {
    if (e.epoch == 1 || e.epoch % 10 == 0) {
      info("%s epoch %zu: loss %.4f, at %.4f, monitor accuracy %.4f", tag.c_str(), e.epoch,
           e.train_loss, e.train_at_loss, e.val_accuracy);
    }
  };
}

DeskRun desk_protocol() {
  const auto t0 = Clock::now();
  DeskRun run;
  const auto data = generate_synthetic_dataset(2400, kDefaultPositiveFraction, 96, kDeskSeed);
  const auto split = split_dataset(data.images.labels, kDeskSeed);
  const ImageSet train = data.images.subset(split.train);
  const ImageSet test = data.images.subset(split.test);
  info("dataset: %zu train, %zu test, %zu positives overall", train.size(), test.size(),
       data.manifest.positives());

  const TrainConfig config = desk_config(30, kDeskSeed);

  // Baseline: 3-fold CV on the training part, then one fit on all of it.
  std::vector<ScoredSample> scored;
  std::vector<std::string> fold_of;
  const auto folds = kfold(train.labels, 3, kDeskSeed);
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const std::string name = "fold" + std::to_string(k + 1);
    const ImageSet ftrain = train.subset(folds[k].train);
    const ImageSet fval = train.subset(folds[k].validation);
    auto r = train_baseline(build_lighter_cnn(Profile::kReduced, derive_seed(kDeskSeed, 1, k)),
                            ftrain, &fval, config, progress("baseline " + name));
    run.histories["baseline_" + name] = r.history.to_csv();
    run.models["baseline_" + name] = serialize_model(r.model);
    for (const auto& s : score_samples(r.model, fval)) {
      scored.push_back(s);
      fold_of.push_back(name);
    }
  }
  run.cv = evaluate_folds(scored, fold_of);

  auto baseline = train_baseline(build_lighter_cnn(Profile::kReduced, kDeskSeed), train, &test,
                                 config, progress("baseline"));
  run.histories["baseline"] = baseline.history.to_csv();
  run.models["baseline"] = serialize_model(baseline.model);
  run.rows.push_back(test_row("Baseline (scratch)", baseline.model, test));
  run.baseline_accuracy = run.rows.back().accuracy;

  // Surrogate teacher, frozen afterwards.
  auto teacher = train_baseline(build_surrogate_teacher(7, Profile::kReduced), train, &test,
                                desk_config(10, 99), progress("teacher"));
  teacher.model.freeze();
  run.histories["teacher"] = teacher.history.to_csv();
  run.models["teacher"] = serialize_model(teacher.model);
  run.rows.push_back(test_row("Surrogate teacher", teacher.model, test));
  const ModelTeacher mt(teacher.model);

  auto at = train_at(build_lighter_cnn(Profile::kReduced, kDeskSeed), mt, train, &test, config,
                     progress("AT"));
  run.histories["at"] = at.history.to_csv();
  run.models["at"] = serialize_model(at.model);
  run.rows.push_back(test_row("AT", at.model, test));
  run.at_first = at.history.epochs.front().train_at_loss;
  run.at_last = at.history.epochs.back().train_at_loss;

  auto lsr = train_at_lsr(mt, train, &test, config, progress("AT+LSR student1"),
                          progress("AT+LSR student2"));
  run.histories["student1"] = lsr.student1.history.to_csv();
  run.histories["student2"] = lsr.student2.history.to_csv();
  run.models["student1"] = serialize_model(lsr.student1.model);
  run.models["student2"] = serialize_model(lsr.student2.model);
  run.rows.push_back(test_row("AT+LSR student1", lsr.student1.model, test));
  run.student1_accuracy = run.rows.back().accuracy;
  run.rows.push_back(test_row("AT+LSR student2", lsr.student2.model, test));
  run.student2_accuracy = run.rows.back().accuracy;
  run.soft_labels = lsr.soft_labels.size();
  for (const auto& s : lsr.soft_labels) run.replaced += s.origin == SoftLabelOrigin::kReplaced;

  run.seconds = seconds_since(t0);
  return run;
}

std::string comparative_table(const DeskRun& run) {
  std::string t = "| Model | Accuracy (%) | ROC-AUC (%) | PR-AUC (%) |\n|---|---|---|---|\n";
  t += format("| Baseline, 3-fold CV on train (mean +- std) | %.2f +- %.2f | %.2f +- %.2f | "
              "%.2f +- %.2f |\n",
              100 * run.cv.accuracy_ms.mean, 100 * run.cv.accuracy_ms.stddev,
              100 * run.cv.roc_auc_ms.mean, 100 * run.cv.roc_auc_ms.stddev,
              100 * run.cv.pr_auc_ms.mean, 100 * run.cv.pr_auc_ms.stddev);
  for (const auto& r : run.rows) {
    t += format("| %s, test | %.2f | %.2f | %.2f |\n", r.name.c_str(), 100 * r.accuracy,
                100 * r.roc_auc, 100 * r.pr_auc);
  }
  return t;
}

fs::path report_dir() {
  const char* env = std::getenv("KDLITE_OUTPUT_DIR");
  return fs::path(env != nullptr && *env != '\0' ? env : ".") / "acceptance";
}

void write_report(const DeskRun& run) {
  const fs::path dir = report_dir();
  fs::create_directories(dir / "models");
  fs::create_directories(dir / "history");
  for (const auto& [name, bytes] : run.models) {
    write_file_bytes(dir / "models" / (name + ".lcnn"), bytes);
  }
  for (const auto& [name, csv] : run.histories) {
    write_text_file(dir / "history" / (name + ".csv"), csv);
  }
  std::string md = "# Desk-scale run\n\n";
  md += "Synthetic data, n = 2400, seed 2024, reduced profile, 30 epochs per student, "
        "10 for the surrogate teacher, augmentation on, no early stopping, deterministic mode. "
        "The 200 held-out samples are monitored each epoch but never steer training.\n\n";
  md += comparative_table(run);
  md += format("\nAT loss, epoch 1 -> 30: %.4f -> %.4f (%.1f%% decrease)\n", run.at_first,
               run.at_last, 100 * (1 - run.at_last / run.at_first));
  md += format("Soft labels: %zu, replaced %zu\n", run.soft_labels, run.replaced);
  md += format("Student2 - student1 test accuracy: %+.2f points\n",
               100 * (run.student2_accuracy - run.student1_accuracy));
  md += format("Wall time: %.0f s\n", run.seconds);
  write_text_file(dir / "report.md", md);
}

// ---------------------------------------------------------------------------
// 9: round-trips

ModelSpec random_spec(Rng& rng) {
  ModelSpec spec;
  spec.profile = "random";
  const std::size_t side = 8 + uniform_index(rng, 9);
  spec.input = {1 + uniform_index(rng, 3), side, side};
  Shape shape = spec.input;
  const auto act = [&] { return static_cast<Activation>(uniform_index(rng, 4)); };
  const auto push = [&](LayerSpec l) {
    l.output = infer_output_shape(l, shape);
    shape = l.output;
    spec.layers.push_back(l);
  };
  const std::size_t convs = 1 + uniform_index(rng, 2);
  for (std::size_t i = 0; i < convs; ++i) {
    push({LayerKind::kConv, 1 + uniform_index(rng, 4),
          1 + uniform_index(rng, std::min<std::size_t>(3, shape[1])), 1 + uniform_index(rng, 2),
          act(), {}});
    if (bernoulli(rng, 0.6)) push({LayerKind::kBatchNorm, 0, 0, 0, act(), {}});
    if (bernoulli(rng, 0.3)) spec.attention_hook = spec.layers.size() - 1;
    if (shape[1] >= 4 && bernoulli(rng, 0.5)) push({LayerKind::kAvgPool, 0, 2, 2, {}, {}});
    if (bernoulli(rng, 0.3)) push({LayerKind::kDropout, 0, 0, 0, {}, {}});
  }
  push({LayerKind::kFlatten, 0, 0, 0, {}, {}});
  if (bernoulli(rng, 0.5)) push({LayerKind::kDense, 1 + uniform_index(rng, 5), 0, 0, act(), {}});
  push({LayerKind::kOutput, 1, 0, 0, Activation::kSigmoid, {}});
  spec.dropout_rate = uniform(rng, 0.0, 0.9);
  spec.leaky_slope = uniform(rng, 0.0, 0.5);
  spec.bn_momentum = uniform(rng, 0.5, 1.0);
  spec.bn_epsilon = uniform(rng, 1e-6, 1e-2);
  return spec;
}

bool same_bits(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool lcnn_round_trip(Rng& rng) {
  Model model(random_spec(rng), rng());
  for (auto& p : model.parameters()) {
    for (auto& v : p.value.data()) v = static_cast<float>(standard_normal(rng) * 3.0);
    if (bernoulli(rng, 0.2)) p.trainable = false;
  }
  const auto bytes = serialize_model(model);
  const Model back = deserialize_model(bytes);
  if (serialize_model(back) != bytes || !(back.spec() == model.spec())) return false;
  if (back.parameters().size() != model.parameters().size()) return false;
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    const auto& a = model.parameters()[i];
    const auto& b = back.parameters()[i];
    if (a.name != b.name || a.trainable != b.trainable || a.value.shape() != b.value.shape() ||
        !same_bits(a.value.data(), b.value.data())) {
      return false;
    }
  }
  return true;
}

bool atmap_round_trip(Rng& rng) {
  const std::size_t n = 1 + uniform_index(rng, 40);
  const auto h = static_cast<std::uint16_t>(1 + uniform_index(rng, 16));
  const auto w = static_cast<std::uint16_t>(1 + uniform_index(rng, 16));
  std::vector<AttentionRecord> records(n);
  std::set<std::uint32_t> used;
  for (auto& r : records) {
    do {
      r.id = static_cast<std::uint32_t>(rng());
    } while (!used.insert(r.id).second);
    r.logit = static_cast<float>(standard_normal(rng) * 10.0);
    r.height = h;
    r.width = w;
    r.values.resize(std::size_t{h} * w);
    for (auto& v : r.values) v = static_cast<float>(std::abs(standard_normal(rng)));
  }
  const auto bytes = encode_attention_file(records);
  const auto back = decode_attention_file(bytes);
  if (encode_attention_file(back) != bytes || back.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = records[i];
    const auto& b = back[i];
    if (a.id != b.id || std::memcmp(&a.logit, &b.logit, sizeof(float)) != 0 ||
        a.height != b.height || a.width != b.width || !same_bits(a.values, b.values)) {
      return false;
    }
  }
  return true;
}

bool file_teacher_equivalence() {
  const auto data = generate_synthetic_dataset(96, kDefaultPositiveFraction, 96, 9);
  const ImageSet& set = data.images;
  TrainConfig config = desk_config(2, 9);
  config.batch_size = 16;
  config.augment.enabled = false;
  Model teacher = build_surrogate_teacher(10, Profile::kReduced);
  teacher.freeze();
  const fs::path path = fs::temp_directory_path() / "kdlite_acceptance_teacher.atmap";
  write_attention_file(path, compute_teacher_records(teacher, set));
  const RecordTeacher from_file = RecordTeacher::from_file(path);
  fs::remove(path);
  const ModelTeacher in_process(teacher);
  const auto a = train_at(build_lighter_cnn(Profile::kReduced, 11), in_process, set, nullptr, config);
  const auto b = train_at(build_lighter_cnn(Profile::kReduced, 11), from_file, set, nullptr, config);
  return serialize_model(a.model) == serialize_model(b.model) &&
         a.history.to_csv() == b.history.to_csv();
}

Verdict round_trips() {
  Rng rng(9);
  int lcnn = 0, atmap = 0;
  for (int i = 0; i < 100; ++i) lcnn += lcnn_round_trip(rng);
  for (int i = 0; i < 100; ++i) atmap += atmap_round_trip(rng);
  const bool teacher = file_teacher_equivalence();
  return {lcnn == 100 && atmap == 100 && teacher,
          format("LCNN %d/100, ATMAP %d/100 bit-exact; file teacher %s in-process teacher", lcnn,
                 atmap, teacher ? "matches" : "DIFFERS FROM")};
}

// ---------------------------------------------------------------------------

template <typename Fn>
void timed(int id, const std::string& title, Fn&& fn) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  report(id, title, v, seconds_since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  if (want(1)) timed(1, "parameter counts", parameter_counts);
  if (want(2)) timed(2, "shape table", shape_table);
  if (want(3)) timed(3, "gradient suite", gradient_suite);
  if (want(4)) timed(4, "attention-loss invariants", at_invariants);
  if (want(5)) timed(5, "soft-label contract", lsr_contract);
  if (want(6)) timed(6, "metric oracles", metric_oracles);

  if (want(7) || want(8)) {
    std::optional<DeskRun> first;
    timed(7, "desk-scale pipeline", [&]() -> Verdict {
      first = desk_protocol();
      write_report(*first);
      std::fputs(comparative_table(*first).c_str(), stdout);
      const double drop = 1.0 - first->at_last / first->at_first;
      const bool a = first->baseline_accuracy >= 0.90;
      const bool b = drop >= 0.50;
      const bool c = first->student2_accuracy >= first->student1_accuracy - 0.02;
      info("(a) baseline test accuracy %.2f%% (>= 90%%): %s", 100 * first->baseline_accuracy,
           a ? "met" : "NOT met");
      info("(b) AT loss %.4f -> %.4f, %.1f%% decrease (>= 50%%): %s", first->at_first,
           first->at_last, 100 * drop, b ? "met" : "NOT met");
      info("(c) student2 %.2f%% vs student1 %.2f%% (>= student1 - 2 points): %s [recorded]",
           100 * first->student2_accuracy, 100 * first->student1_accuracy, c ? "met" : "NOT met");
      info("report: %s", (report_dir() / "report.md").string().c_str());
      return {a && b, format("baseline %.2f%%, AT loss -%.1f%%, student2 %+.2f points vs "
                             "student1, %.0f s",
                             100 * first->baseline_accuracy, 100 * drop,
                             100 * (first->student2_accuracy - first->student1_accuracy),
                             first->seconds)};
    });
    if (want(8)) {
      timed(8, "determinism", [&]() -> Verdict {
        if (!first) return {false, "criterion 7 did not complete"};
        const DeskRun second = desk_protocol();
        std::size_t models = 0, histories = 0;
        for (const auto& [name, bytes] : first->models) {
          const auto it = second.models.find(name);
          const bool same = it != second.models.end() && it->second == bytes;
          models += same;
          if (!same) info("model %s differs", name.c_str());
        }
        for (const auto& [name, csv] : first->histories) {
          const auto it = second.histories.find(name);
          const bool same = it != second.histories.end() && it->second == csv;
          histories += same;
          if (!same) info("history %s differs", name.c_str());
        }
        return {models == first->models.size() && histories == first->histories.size(),
                format("%zu/%zu model files and %zu/%zu history CSVs bit-identical", models,
                       first->models.size(), histories, first->histories.size())};
      });
    }
  }
  if (want(9)) timed(9, "round-trips", round_trips);

  std::printf("%s: %d criterion(s) failed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
