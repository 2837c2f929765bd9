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

// kdlite: command-line front end.
//
//   synth-data  render a synthetic two-class dataset (manifest + images)
//   train       baseline or attention-transfer training, optional k-fold CV
//   distill     two-student AT+LSR protocol
//   evaluate    metrics report, confusion matrix, fold summaries
//   predict     probability and label for single images
//   gradcheck   finite-difference verification of every operator
//   selfcheck   parameter counts and the full-profile shape table

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>
#include <zlib.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "kdlite/architecture.hpp"
#include "kdlite/dataset.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/gradient_suite.hpp"
#include "kdlite/metrics.hpp"
#include "kdlite/ops.hpp"
#include "kdlite/serialization.hpp"
#include "kdlite/simd/kernels.hpp"
#include "kdlite/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace kdlite::cli {
namespace {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kVerification = 5,
};

constexpr const char* kOutputEnv = "KDLITE_OUTPUT_DIR";

/// Flags shared by every command.
struct Common {
  std::string config_file;
  std::string out_root;
  std::string run_name;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool deterministic = false;
  bool quiet = false;
};

// ---------------------------------------------------------------------------
// Run directories and stamps

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json versions() {
  json v;
  v["kdlite"] = KDLITE_VERSION;
  v["lcnn_format"] = std::to_string(kModelFormatMajor) + "." + std::to_string(kModelFormatMinor);
  v["atmap_format"] = kAtmapVersion;
  v["compiler"] = __VERSION__;
  v["libpng"] = PNG_LIBPNG_VER_STRING;
  v["zlib"] = ZLIB_VERSION;
  v["cli11"] = CLI11_VERSION;
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["simd"] = std::string(simd::level_name(simd::active_level()));
  return v;
}

class RunDir {
 public:
  /// `canonical` identifies the invocation; the default directory name is
  /// derived from it so that identical invocations reuse one directory.
  RunDir(const std::string& command, const Common& common, const std::string& canonical) {
    fs::path root = common.out_root;
    if (root.empty()) {
      const char* env = std::getenv(kOutputEnv);
      root = env != nullptr && *env != '\0' ? env : "runs";
    }
    const std::string name = common.run_name.empty()
                                 ? command + "-s" + std::to_string(common.seed) + "-" +
                                       hex64(fnv1a(canonical)).substr(0, 8)
                                 : common.run_name;
    path_ = root / name;
    fs::create_directories(path_);
    stamp_["command"] = command;
    stamp_["seed"] = common.seed;
    stamp_["deterministic"] = common.deterministic;
    stamp_["workers"] = common.deterministic ? 1 : common.workers;
    stamp_["invocation"] = canonical;
    stamp_["versions"] = versions();
  }

  const fs::path& path() const { return path_; }
  json& stamp() { return stamp_; }

  void write_stamp() const { write_text_file(path_ / "stamp.json", stamp_.dump(2) + "\n"); }

 private:
  fs::path path_;
  json stamp_;
};

void note(const Common& c, const std::string& line) {
  if (!c.quiet) std::cerr << line << "\n";
}

// ---------------------------------------------------------------------------
// Training configuration from file and flags

struct TrainFlags {
  std::string profile;
  std::optional<double> lr;
  std::optional<std::size_t> batch, epochs, patience;
  std::optional<double> beta1, beta2, temperature, subset_fraction, replacement;
  bool no_augment = false;
  bool fixed_budget = false;
  bool no_early_stopping = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--profile", f.profile, "Model profile: full (3x300x300) or reduced (3x96x96)")
      ->check(CLI::IsMember({"full", "reduced"}));
  app->add_option("--lr", f.lr, "Adam learning rate [1e-3]");
  app->add_option("--batch-size", f.batch, "Mini-batch size [64]");
  app->add_option("--epochs", f.epochs, "Maximum epochs [256]");
  app->add_option("--patience", f.patience, "Early-stopping patience in epochs [20]");
  app->add_option("--beta1", f.beta1, "Cross-entropy divisor [1]");
  app->add_option("--beta2", f.beta2, "Attention-loss divisor [2]; inf disables the term");
  app->add_option("--temperature", f.temperature, "Soft-label temperature [5]");
  app->add_option("--subset-fraction", f.subset_fraction, "Student-1 subset fraction [0.5]");
  app->add_option("--lsr-replacement", f.replacement,
                  "True-class probability for misclassified samples [0.6]");
  app->add_flag("--no-augment", f.no_augment, "Disable rotation/flip/zoom augmentation");
  app->add_flag("--fixed-budget", f.fixed_budget,
                "Run the full epoch budget without early stopping");
  app->add_flag("--no-early-stopping", f.no_early_stopping, "Disable early stopping");
}

TrainConfig make_config(const Common& c, const TrainFlags& f) {
  TrainConfig config;
  if (!c.config_file.empty()) config = load_train_config(c.config_file);
  if (!f.profile.empty()) config.profile = parse_profile(f.profile);
  if (f.lr) config.learning_rate = *f.lr;
  if (f.batch) config.batch_size = *f.batch;
  if (f.epochs) config.max_epochs = *f.epochs;
  if (f.patience) config.patience = *f.patience;
  if (f.beta1) config.weights.beta1 = *f.beta1;
  if (f.beta2) config.weights.beta2 = *f.beta2;
  if (f.temperature) config.weights.temperature = *f.temperature;
  if (f.subset_fraction) config.subset_fraction = *f.subset_fraction;
  if (f.replacement) config.lsr_replacement = *f.replacement;
  if (f.no_augment) config.augment.enabled = false;
  if (f.fixed_budget) config.use_fixed_budget();
  if (f.no_early_stopping) config.early_stopping = false;
  config.seed = c.seed;
  config.workers = c.workers;
  config.deterministic = c.deterministic;
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// Data

struct Data {
  DatasetManifest manifest;
  fs::path base;
};

Data read_data(const std::string& manifest_path, const std::string& data_dir) {
  Data d;
  d.manifest = read_manifest(manifest_path);
  d.manifest.validate();
  d.base = data_dir.empty() ? fs::path(manifest_path).parent_path() : fs::path(data_dir);
  return d;
}

/// Rows whose split equals `split`; "all" selects every row, and when no
/// row carries a split tag every row belongs to "train".
DatasetManifest select_split(const DatasetManifest& m, const std::string& split) {
  const bool tagged = std::any_of(m.rows.begin(), m.rows.end(),
                                  [](const ManifestRow& r) { return !r.split.empty(); });
  DatasetManifest out;
  for (const auto& r : m.rows) {
    if (split == "all" || r.split == split || (!tagged && split == "train")) out.rows.push_back(r);
  }
  return out;
}

ImageSet load_rows(const Data& d, const DatasetManifest& rows, const ModelSpec& spec) {
  return load_dataset(rows, d.base, spec.input.at(1), spec.input.at(2));
}

// ---------------------------------------------------------------------------
// Teachers

struct LoadedTeacher {
  std::optional<Model> model;
  std::unique_ptr<Teacher> teacher;
  std::string kind;
};

bool looks_like_atmap(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "ATMP";
}

LoadedTeacher load_teacher(const std::string& path) {
  if (path.empty()) throw ConfigError("--teacher is required for this strategy");
  if (!fs::exists(path)) throw DataError("teacher file '" + path + "' does not exist");
  LoadedTeacher t;
  if (looks_like_atmap(path)) {
    t.teacher = std::make_unique<RecordTeacher>(RecordTeacher::from_file(path));
    t.kind = "atmap";
  } else {
    t.model.emplace(load_model(path));
    t.model->freeze();
    t.teacher = std::make_unique<ModelTeacher>(*t.model);
    t.kind = "model";
  }
  return t;
}

EpochCallback progress(const Common& c, const std::string& tag) {
  return [&c, tag](const EpochRecord& r) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s epoch %zu  loss %.4f  at %.4f  val_loss %.4f  val_acc %.4f",
                  tag.c_str(), r.epoch, r.train_loss, r.train_at_loss, r.val_loss, r.val_accuracy);
    note(c, buf);
  };
}

/// Arguments that affect results; output placement and verbosity are dropped
/// so that a rerun into another directory stamps identically.
std::string canonical_args(int argc, char** argv) {
  std::string s;
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--out" || a == "--run-name") {
      ++i;
      continue;
    }
    if (a == "-q" || a == "--quiet" || a.starts_with("--out=") || a.starts_with("--run-name=")) {
      continue;
    }
    if (!s.empty()) s += ' ';
    s += a;
  }
  return s;
}

// ---------------------------------------------------------------------------
// synth-data

struct SynthFlags {
  std::size_t n = 1000;
  double positive_fraction = kDefaultPositiveFraction;
  std::size_t size = 96;
  bool descriptors = false;
  bool no_split = false;
};

int cmd_synth(const Common& c, const SynthFlags& f, const std::string& canonical) {
  const auto data = generate_synthetic_dataset(f.n, f.positive_fraction, f.size, c.seed);
  RunDir run("synth-data", c, canonical);
  DatasetManifest manifest = data.manifest;
  if (!f.no_split) {
    const auto split = split_dataset(data.images.labels, c.seed);
    for (auto i : split.train) manifest.rows[i].split = "train";
    for (auto i : split.test) manifest.rows[i].split = "test";
  }
  if (!f.descriptors) {
    fs::create_directories(run.path() / "images");
    for (std::size_t i = 0; i < data.images.size(); ++i) {
      ImageRecord img;
      img.height = img.width = f.size;
      const auto px = data.images.sample(i);
      img.pixels.assign(px.begin(), px.end());
      char name[32];
      std::snprintf(name, sizeof name, "images/%06u.ppm", data.images.ids[i]);
      save_ppm(run.path() / name, img);
      manifest.rows[i].source = name;
    }
  }
  write_manifest(run.path() / "manifest.csv", manifest);
  run.stamp()["n"] = f.n;
  run.stamp()["positives"] = manifest.positives();
  run.stamp()["image_size"] = f.size;
  run.write_stamp();
  std::cout << (run.path() / "manifest.csv").string() << "\n";
  note(c, std::to_string(manifest.positives()) + " positives of " + std::to_string(f.n));
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  std::string manifest, data_dir, strategy = "baseline", teacher, arch = "student";
  std::string train_split = "train", val_split = "val";
  std::size_t folds = 0;
  TrainFlags flags;
};

Model fresh_model(const std::string& arch, Profile profile, std::uint64_t seed) {
  return arch == "teacher" ? build_surrogate_teacher(seed, profile) : build_lighter_cnn(profile, seed);
}

TrainResult train_one(const TrainCmd& t, const TrainConfig& config, const Teacher* teacher,
                      const ImageSet& train, const ImageSet* val, const EpochCallback& cb) {
  Model model = fresh_model(t.arch, config.profile, config.seed);
  if (t.strategy == "at") return train_at(std::move(model), *teacher, train, val, config, cb);
  return train_baseline(std::move(model), train, val, config, cb);
}

int cmd_train(const Common& c, const TrainCmd& t, const std::string& canonical) {
  const TrainConfig config = make_config(c, t.flags);
  LoadedTeacher teacher;
  if (t.strategy == "at") teacher = load_teacher(t.teacher);
  const Data data = read_data(t.manifest, t.data_dir);
  const ModelSpec spec = fresh_model(t.arch, config.profile, 0).spec();
  const ImageSet train = load_rows(data, select_split(data.manifest, t.train_split), spec);
  if (train.size() == 0) throw DataError("no rows with split '" + t.train_split + "'");
  const auto val_rows = select_split(data.manifest, t.val_split);
  std::optional<ImageSet> val;
  if (!val_rows.rows.empty()) val = load_rows(data, val_rows, spec);

  RunDir run("train", c, canonical);
  write_text_file(run.path() / "config.txt", to_text(config));
  run.stamp()["config_digest"] = config_digest(config);
  run.stamp()["strategy"] = t.strategy;
  run.stamp()["arch"] = t.arch;
  if (teacher.teacher) run.stamp()["teacher"] = {{"path", t.teacher}, {"kind", teacher.kind}};

  if (t.folds > 0) {
    std::vector<ScoredSample> scored;
    std::vector<std::string> fold_of;
    const auto folds = kfold(train.labels, t.folds, config.seed);
    for (std::size_t k = 0; k < folds.size(); ++k) {
      const std::string name = "fold" + std::to_string(k + 1);
      const ImageSet ftrain = train.subset(folds[k].train), fval = train.subset(folds[k].validation);
      const auto r = train_one(t, config, teacher.teacher.get(), ftrain, &fval, progress(c, name));
      fs::create_directories(run.path() / "folds");
      write_text_file(run.path() / "folds" / (name + "_history.csv"), r.history.to_csv());
      for (const auto& s : score_samples(r.model, fval, config.batch_size)) {
        scored.push_back(s);
        fold_of.push_back(name);
      }
    }
    const auto report = evaluate_folds(scored, fold_of);
    write_text_file(run.path() / "folds.json", to_json(report) + "\n");
    std::cout << to_table(report);
  }

  const auto result =
      train_one(t, config, teacher.teacher.get(), train, val ? &*val : nullptr, progress(c, "train"));
  save_model(run.path() / "model.lcnn", result.model);
  write_text_file(run.path() / "history.csv", result.history.to_csv());
  run.stamp()["best_epoch"] = result.history.best_epoch;
  run.stamp()["stopped_early"] = result.history.stopped_early;
  run.write_stamp();
  std::cout << (run.path() / "model.lcnn").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// distill

struct DistillCmd {
  std::string manifest, data_dir, teacher;
  std::string train_split = "train", val_split = "val";
  TrainFlags flags;
};

int cmd_distill(const Common& c, const DistillCmd& d, const std::string& canonical) {
  const TrainConfig config = make_config(c, d.flags);
  const LoadedTeacher teacher = load_teacher(d.teacher);
  const Data data = read_data(d.manifest, d.data_dir);
  const ModelSpec spec = lighter_cnn_spec(config.profile);
  const ImageSet train = load_rows(data, select_split(data.manifest, d.train_split), spec);
  if (train.size() == 0) throw DataError("no rows with split '" + d.train_split + "'");
  const auto val_rows = select_split(data.manifest, d.val_split);
  std::optional<ImageSet> val;
  if (!val_rows.rows.empty()) val = load_rows(data, val_rows, spec);

  const auto r = train_at_lsr(*teacher.teacher, train, val ? &*val : nullptr, config,
                              progress(c, "student1"), progress(c, "student2"));
  RunDir run("distill", c, canonical);
  save_model(run.path() / "student1.lcnn", r.student1.model);
  save_model(run.path() / "student2.lcnn", r.student2.model);
  write_soft_labels(run.path() / "soft_labels.csv", r.soft_labels);
  fs::create_directories(run.path() / "logs");
  write_text_file(run.path() / "logs" / "student1_history.csv", r.student1.history.to_csv());
  write_text_file(run.path() / "logs" / "student2_history.csv", r.student2.history.to_csv());
  write_text_file(run.path() / "logs" / "config.txt", to_text(config));

  std::size_t replaced = 0;
  for (const auto& s : r.soft_labels) replaced += s.origin == SoftLabelOrigin::kReplaced;
  run.stamp()["config_digest"] = config_digest(config);
  run.stamp()["teacher"] = {{"path", d.teacher}, {"kind", teacher.kind}};
  run.stamp()["subset_size"] = r.subset.size();
  run.stamp()["soft_labels"] = r.soft_labels.size();
  run.stamp()["replaced"] = replaced;
  run.stamp()["student_seeds"] = {student_seed(config.seed, 1), student_seed(config.seed, 2)};
  run.write_stamp();
  std::cout << run.path().string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCmd {
  std::string model, manifest, data_dir, split = "test", atmap_out;
  bool by_split = false;
  double threshold = kDefaultThreshold;
};

int cmd_evaluate(const Common& c, const EvaluateCmd& e, const std::string& canonical) {
  const Model model = load_model(e.model);
  const Data data = read_data(e.manifest, e.data_dir);
  const auto rows = select_split(data.manifest, e.by_split ? "all" : e.split);
  if (rows.rows.empty()) throw DataError("no rows with split '" + e.split + "'");
  const ImageSet set = load_rows(data, rows, model.spec());
  const auto scored = score_samples(model, set);

  EvalReport report;
  if (e.by_split) {
    std::vector<std::string> fold_of(set.splits.begin(), set.splits.end());
    report = evaluate_folds(scored, fold_of, e.threshold);
  } else {
    report = evaluate_scores(scored, e.threshold);
  }
  RunDir run("evaluate", c, canonical);
  write_text_file(run.path() / "report.json", to_json(report) + "\n");
  write_text_file(run.path() / "confusion.csv", confusion_csv(report.confusion));
  std::string scores = "id,score,label\n";
  for (const auto& s : scored) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%u,%.17g,%d\n", s.id, s.score, s.label);
    scores += buf;
  }
  write_text_file(run.path() / "scores.csv", scores);
  if (!e.atmap_out.empty()) {
    write_attention_file(e.atmap_out, compute_teacher_records(model, set));
    run.stamp()["atmap"] = e.atmap_out;
  }
  run.stamp()["model"] = e.model;
  run.stamp()["manifest"] = e.manifest;
  run.write_stamp();
  std::cout << to_table(report);
  return kOk;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const std::string& model_path, const std::vector<std::string>& images,
                double threshold) {
  const Model model = load_model(model_path);
  const auto& in = model.spec().input;
  for (const auto& path : images) {
    ImageRecord img = load_image(path);
    if (img.height != in[1] || img.width != in[2]) img = resize(img, in[1], in[2]);
    const auto out = model.infer(reshape(img.to_tensor(), Shape{1, in[0], in[1], in[2]}));
    const double p = probability_of(out.logits.data()[0]);
    std::printf("%s\t%.4f\t%d\n", path.c_str(), p, p >= threshold ? 1 : 0);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck / selfcheck

int cmd_gradcheck(const Common& c, std::size_t n_seeds, double tolerance, double step,
                  const std::string& filter) {
  std::vector<std::uint64_t> seeds(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = c.seed + i;
  GradCheckOptions options;
  options.tolerance = tolerance;
  options.step = step;
  std::map<std::string, std::pair<double, bool>> worst;
  std::vector<std::string> order;
  for (const auto& r : run_gradient_suite(seeds, options, filter)) {
    auto [it, inserted] = worst.try_emplace(r.name, 0.0, true);
    if (inserted) order.push_back(r.name);
    it->second.first = std::max(it->second.first, r.report.worst_error);
    it->second.second = it->second.second && r.report.passed;
  }
  if (order.empty()) throw ConfigError("no gradient case matches '" + filter + "'");
  bool ok = true;
  for (const auto& name : order) {
    const auto& [err, passed] = worst[name];
    std::printf("%-32s worst %.3e  %s\n", name.c_str(), err, passed ? "PASS" : "FAIL");
    ok = ok && passed;
  }
  std::printf("%zu cases x %zu seeds, tolerance %.1e, step %.1e: %s\n", order.size(), n_seeds,
              tolerance, step, ok ? "PASS" : "FAIL");
  return ok ? kOk : kVerification;
}

// Published layer table of the full-profile network.
struct TableRow {
  const char* layer;
  Shape output;
};

const TableRow kPublishedTable[] = {
    {"conv", {64, 147, 147}},  {"batchnorm", {64, 147, 147}},  {"conv", {128, 140, 140}},
    {"batchnorm", {128, 140, 140}}, {"avgpool", {128, 69, 69}}, {"dropout", {128, 69, 69}},
    {"conv", {256, 62, 62}},   {"batchnorm", {256, 62, 62}},   {"conv", {128, 55, 55}},
    {"batchnorm", {128, 55, 55}}, {"avgpool", {128, 26, 26}},  {"dropout", {128, 26, 26}},
    {"conv", {64, 19, 19}},    {"batchnorm", {64, 19, 19}},    {"conv", {32, 8, 8}},
    {"batchnorm", {32, 8, 8}}, {"conv", {32, 4, 4}},           {"batchnorm", {32, 4, 4}},
    {"flatten", {512}},        {"dense", {32}},                {"dense", {4}},
    {"output", {1}},
};

int cmd_selfcheck() {
  bool ok = true;
  const auto spec = lighter_cnn_spec(Profile::kFull);
  const auto shapes = compute_shapes(spec);
  std::printf("%-4s %-10s %-16s %-16s\n", "row", "layer", "computed", "expected");
  const std::size_t rows = std::size(kPublishedTable);
  if (shapes.size() != rows) ok = false;
  for (std::size_t i = 0; i < std::min(rows, shapes.size()); ++i) {
    const bool match = shapes[i] == kPublishedTable[i].output &&
                       layer_kind_name(spec.layers[i].kind) == kPublishedTable[i].layer;
    ok = ok && match;
    std::printf("%-4zu %-10s %-16s %-16s %s\n", i + 1,
                std::string(layer_kind_name(spec.layers[i].kind)).c_str(),
                to_string(shapes[i]).c_str(), to_string(kPublishedTable[i].output).c_str(),
                match ? "ok" : "MISMATCH");
  }
  const auto model = build_lighter_cnn(Profile::kFull, 0);
  const auto count = model.count_parameters();
  const bool count_ok = count == ParameterCount{5350633, 5352041};
  ok = ok && count_ok;
  std::printf("parameters: trainable %zu, total %zu (expected 5350633, 5352041) %s\n",
              count.trainable, count.total, count_ok ? "ok" : "MISMATCH");
  const auto ts = surrogate_teacher_spec(Profile::kFull);
  const auto th = compute_shapes(ts)[*ts.attention_hook];
  const auto sh = shapes[*spec.attention_hook];
  const bool hook_ok = sh == Shape{32, 8, 8} && th[1] == 8 && th[2] == 8;
  ok = ok && hook_ok;
  std::printf("attention hook: student %s, teacher %s %s\n", to_string(sh).c_str(),
              to_string(th).c_str(), hook_ok ? "ok" : "MISMATCH");
  std::printf("simd: %s\n", std::string(simd::level_name(simd::active_level())).c_str());
  std::printf("selfcheck: %s\n", ok ? "PASS" : "FAIL");
  return ok ? kOk : kVerification;
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "Training config file (key = value lines)");
  app->add_option("--out", c.out_root,
                  std::string("Output root directory [$") + kOutputEnv + " or ./runs]");
  app->add_option("--run-name", c.run_name, "Run directory name under the output root");
  app->add_option("--seed", c.seed, "Random seed [0]");
  app->add_option("--workers", c.workers, "Data-loading threads [1]")->check(CLI::PositiveNumber);
  app->add_flag("--deterministic", c.deterministic,
                "Single worker and zeroed wall-clock column for bit-identical reruns");
  app->add_flag("-q,--quiet", c.quiet, "No progress output");
}

int run(int argc, char** argv) {
  CLI::App app{"kdlite: lightweight CNN training with attention transfer and label smoothing"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KDLITE_VERSION);
  Common common;

  SynthFlags synth;
  auto* s = app.add_subcommand("synth-data", "Render a synthetic two-class dataset");
  add_common(s, common);
  s->add_option("--n", synth.n, "Number of samples")->check(CLI::NonNegativeNumber);
  s->add_option("--positive-fraction", synth.positive_fraction, "Fraction of label-1 samples [0.41]");
  s->add_option("--size", synth.size, "Image side in pixels [96]");
  s->add_flag("--descriptors", synth.descriptors,
              "Write synth: descriptors instead of PPM files");
  s->add_flag("--no-split", synth.no_split, "Leave the split column empty");

  TrainCmd train;
  auto* t = app.add_subcommand("train", "Train a model (baseline or attention transfer)");
  add_common(t, common);
  add_train_flags(t, train.flags);
  t->add_option("--manifest", train.manifest, "Dataset manifest CSV")->required();
  t->add_option("--data-dir", train.data_dir, "Base directory for image paths [manifest dir]");
  t->add_option("--strategy", train.strategy, "baseline or at")
      ->check(CLI::IsMember({"baseline", "at"}));
  t->add_option("--teacher", train.teacher, "Teacher model (.lcnn) or ATMAP file");
  t->add_option("--arch", train.arch, "student (lighter CNN) or teacher (surrogate teacher)")
      ->check(CLI::IsMember({"student", "teacher"}));
  t->add_option("--train-split", train.train_split, "Split tag used for training [train]");
  t->add_option("--val-split", train.val_split, "Split tag monitored each epoch [val]");
  t->add_option("--folds", train.folds, "Stratified k-fold cross-validation before the final fit");

  DistillCmd distill;
  auto* d = app.add_subcommand("distill", "Two-student AT+LSR distillation");
  add_common(d, common);
  add_train_flags(d, distill.flags);
  d->add_option("--manifest", distill.manifest, "Dataset manifest CSV")->required();
  d->add_option("--data-dir", distill.data_dir, "Base directory for image paths");
  d->add_option("--teacher", distill.teacher, "Teacher model (.lcnn) or ATMAP file")->required();
  d->add_option("--train-split", distill.train_split, "Split tag used for training [train]");
  d->add_option("--val-split", distill.val_split, "Split tag monitored each epoch [val]");

  EvaluateCmd evaluate;
  auto* e = app.add_subcommand("evaluate", "Evaluate a model on a manifest split");
  add_common(e, common);
  e->add_option("--model", evaluate.model, "Model file (.lcnn)")->required();
  e->add_option("--manifest", evaluate.manifest, "Dataset manifest CSV")->required();
  e->add_option("--data-dir", evaluate.data_dir, "Base directory for image paths");
  e->add_option("--split", evaluate.split, "Split tag to evaluate, or all [test]");
  e->add_flag("--by-split", evaluate.by_split,
              "Treat every split tag as a fold and report mean +- std");
  e->add_option("--threshold", evaluate.threshold, "Decision threshold [0.5]");
  e->add_option("--export-atmap", evaluate.atmap_out,
                "Also write the model's attention maps and logits as an ATMAP file");

  std::string predict_model;
  std::vector<std::string> predict_images;
  double predict_threshold = kDefaultThreshold;
  auto* p = app.add_subcommand("predict", "Classify images: prints path, probability, label");
  p->add_option("--model", predict_model, "Model file (.lcnn)")->required();
  p->add_option("images", predict_images, "PNG or PPM files")->required();
  p->add_option("--threshold", predict_threshold, "Decision threshold [0.5]");

  std::size_t gc_seeds = 20;
  double gc_tol = 1e-6, gc_step = 1e-5;
  std::string gc_filter;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of every operator");
  g->add_option("--seeds", gc_seeds, "Random seeds per case [20]")->check(CLI::PositiveNumber);
  g->add_option("--tolerance", gc_tol, "Maximum relative error [1e-6]");
  g->add_option("--step", gc_step, "Central-difference step [1e-5]");
  g->add_option("--filter", gc_filter, "Only cases whose name contains this text");
  g->add_option("--seed", common.seed, "First seed [0]");

  app.add_subcommand("selfcheck", "Verify parameter counts and the full-profile shape table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kConfig;
  }
  if (common.deterministic) common.workers = 1;
  const std::string canonical = canonical_args(argc, argv);

  if (s->parsed()) return cmd_synth(common, synth, canonical);
  if (t->parsed()) {
    if (train.strategy == "at" && train.teacher.empty()) {
      throw ConfigError("--strategy at needs --teacher");
    }
    return cmd_train(common, train, canonical);
  }
  if (d->parsed()) return cmd_distill(common, distill, canonical);
  if (e->parsed()) return cmd_evaluate(common, evaluate, canonical);
  if (p->parsed()) return cmd_predict(predict_model, predict_images, predict_threshold);
  if (g->parsed()) return cmd_gradcheck(common, gc_seeds, gc_tol, gc_step, gc_filter);
  return cmd_selfcheck();
}

}  // namespace
}  // namespace kdlite::cli

int main(int argc, char** argv) {
  using namespace kdlite;
  try {
    return cli::run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return cli::kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return cli::kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInternal;
  }
}
