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

// Splitting, augmentation, Adam and the three training strategies:
// scratch baseline, attention transfer (AT) from a frozen teacher, and the
// two-student AT+LSR protocol.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kdlite/architecture.hpp"
#include "kdlite/dataset.hpp"
#include "kdlite/distillation.hpp"
#include "kdlite/metrics.hpp"
#include "kdlite/random.hpp"

namespace kdlite {

// ---------------------------------------------------------------------------
// Configuration

struct AugmentConfig {
  bool enabled = true;
  bool rotate = true;  // angle ~ U[0, 360) degrees
  bool hflip = true;   // p = 0.5
  bool vflip = true;   // p = 0.5
  bool zoom = true;    // scale ~ U[zoom_min, zoom_max] about the centre
  double zoom_min = 0.5;
  double zoom_max = 2.0;
};

enum class LrSchedule { kConstant, kStep };

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 256;
  LossWeights weights;
  double subset_fraction = 0.5;
  double lsr_replacement = kDefaultLsrReplacement;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  Profile profile = Profile::kFull;
  bool early_stopping = true;  // on validation loss; needs a validation set
  std::size_t patience = 20;
  AtReduction at_reduction = AtReduction::kMean;
  double at_epsilon = kDefaultAtEpsilon;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  std::size_t lr_step_epochs = 50;
  double lr_step_gamma = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t workers = 1;     // data-loading threads
  bool deterministic = false;  // one worker, zero wall-clock column

  /// Throws ConfigError on a non-positive rate or size, a subset fraction
  /// outside (0, 1], or an invalid zoom range.
  void validate() const;
  double learning_rate_at(std::size_t epoch) const;
  /// Disables early stopping so that training runs all max_epochs.
  void use_fixed_budget() { early_stopping = false; }
};

/// `key = value` lines, `#` comments. Keys are the TrainConfig field names
/// (augment fields prefixed `augment_`, loss weights as beta1, beta2,
/// temperature) plus `fixed_budget = true`. Unknown keys throw ConfigError.
void apply_config_text(TrainConfig& config, std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Canonical text accepted by apply_config_text.
std::string to_text(const TrainConfig& config);
/// FNV-1a 64 of to_text(config), as 16 hex digits.
std::string config_digest(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Splitting

struct Split {
  std::vector<std::size_t> train;  // ascending indices
  std::vector<std::size_t> test;
};

/// Stratified split. The test part holds round(n * ratio_test / (ratio_train +
/// ratio_test)) samples, apportioned to the classes by largest remainder, so
/// each class is within one sample of its exact share. Throws ConfigError
/// when n < ratio_train + ratio_test.
Split split_dataset(std::span<const int> labels, std::uint64_t seed, std::size_t ratio_train = 11,
                    std::size_t ratio_test = 1);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Stratified k-fold: each class is shuffled and dealt round-robin, the
/// dealer continuing across classes, so fold sizes differ by at most one.
/// Throws ConfigError when k < 2 or k > n.
std::vector<Fold> kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Stratified subset of round(n * fraction) indices (at least one), ascending.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentParams {
  double angle_degrees = 0.0;
  bool hflip = false;
  bool vflip = false;
  double zoom = 1.0;
};

AugmentParams sample_augment(const AugmentConfig& config, Rng& rng);

/// Rotation and zoom about the image centre with bilinear sampling; source
/// taps outside the frame read as white (1.0). Flips are exact index flips
/// applied afterwards. `in` and `out` are C x H x W and must not alias.
void apply_augment(std::span<const float> in, std::span<float> out, std::size_t channels,
                   std::size_t height, std::size_t width, const AugmentParams& params);

ImageRecord augment(const ImageRecord& image, Rng& rng, const AugmentConfig& config = {});

/// Stream used for the augmentation of sample `id` in `epoch`.
Rng augment_rng(std::uint64_t seed, std::size_t epoch, std::uint32_t id);

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of every tensor in `params` using its
/// accumulated gradient (a missing gradient counts as zero). The state is
/// sized on first use.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamOptions& options);

// ---------------------------------------------------------------------------
// Teachers

/// Teacher signals for a batch: N x H x W attention maps and N logits.
struct TeacherOutput {
  Tensor<float> maps;
  std::vector<float> logits;
};

class Teacher {
 public:
  virtual ~Teacher() = default;
  /// `batch` holds the (possibly augmented) images of `ids`.
  virtual TeacherOutput outputs(std::span<const std::uint32_t> ids,
                                const Tensor<float>& batch) const = 0;
  /// Spatial size of the maps.
  virtual std::pair<std::size_t, std::size_t> map_shape() const = 0;
  /// False when the maps were computed ahead of time for unaugmented images.
  virtual bool accepts_augmented_images() const = 0;
  /// Throws DataError if some id cannot be served.
  virtual void check_coverage(std::span<const std::uint32_t> /*ids*/) const {}
};

/// Runs a frozen model in eval mode and takes attention maps at its hook.
class ModelTeacher final : public Teacher {
 public:
  explicit ModelTeacher(const Model& model);
  TeacherOutput outputs(std::span<const std::uint32_t> ids,
                        const Tensor<float>& batch) const override;
  std::pair<std::size_t, std::size_t> map_shape() const override;
  bool accepts_augmented_images() const override { return true; }

 private:
  const Model& model_;
};

/// Serves precomputed records (e.g. read from an ATMAP file) by sample id.
class RecordTeacher final : public Teacher {
 public:
  explicit RecordTeacher(std::vector<AttentionRecord> records);
  static RecordTeacher from_file(const std::filesystem::path& path);
  TeacherOutput outputs(std::span<const std::uint32_t> ids,
                        const Tensor<float>& batch) const override;
  std::pair<std::size_t, std::size_t> map_shape() const override;
  bool accepts_augmented_images() const override { return false; }
  void check_coverage(std::span<const std::uint32_t> ids) const override;
  std::size_t size() const noexcept { return records_.size(); }

 private:
  std::vector<AttentionRecord> records_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
};

/// Teacher logits and attention maps for every sample of `set`.
std::vector<AttentionRecord> compute_teacher_records(const Model& teacher, const ImageSet& set,
                                                     std::size_t batch_size = 64);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_at_loss = 0.0;  // NaN when the strategy has no AT term
  double val_loss = 0.0;       // NaN without a validation set
  double val_accuracy = 0.0;
  double val_roc_auc = 0.0;
  double val_pr_auc = 0.0;
  double seconds = 0.0;
  std::uint64_t rng_digest = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch whose parameters were kept
  bool stopped_early = false;

  /// Columns: epoch, train_loss, val_loss, val_accuracy, val_roc_auc,
  /// val_pr_auc, seconds, train_at_loss, rng_digest. Reals use 17
  /// significant digits; NaN prints as "nan".
  std::string to_csv() const;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Binary cross-entropy on hard labels.
TrainResult train_baseline(Model model, const ImageSet& train, const ImageSet* validation,
                           const TrainConfig& config, const EpochCallback& on_epoch = {});

/// BCE(hard labels) + (1 / beta2) * L_AT against a frozen teacher. Throws
/// ContractError when the teacher's maps do not match the student hook, and
/// ConfigError when augmentation is on but the teacher cannot see it.
TrainResult train_at(Model student, const Teacher& teacher, const ImageSet& train,
                     const ImageSet* validation, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

/// (1/beta1) CE(soft labels) + (1/beta2) L_AT, soft targets looked up by id.
TrainResult train_with_soft_labels(Model student, const Teacher& teacher, const ImageSet& train,
                                   std::span<const SoftLabelRecord> soft_labels,
                                   const ImageSet* validation, const TrainConfig& config,
                                   const EpochCallback& on_epoch = {});

struct LsrResult {
  TrainResult student1;
  TrainResult student2;
  std::vector<std::size_t> subset;  // indices into the training set
  std::vector<SoftLabelRecord> soft_labels;
};

/// Student 1 trained with AT on a stratified subset, soft labels from
/// student 1 over the whole training set, student 2 trained with the
/// combined loss. Students are built from config.profile with seeds derived
/// from config.seed.
LsrResult train_at_lsr(const Teacher& teacher, const ImageSet& train, const ImageSet* validation,
                       const TrainConfig& config, const EpochCallback& on_epoch1 = {},
                       const EpochCallback& on_epoch2 = {});

/// Seeds of the models train_at_lsr builds.
std::uint64_t student_seed(std::uint64_t run_seed, int student);

// ---------------------------------------------------------------------------
// Inference helpers

/// One logit per sample, eval mode.
std::vector<float> predict_logits(const Model& model, const ImageSet& set,
                                  std::size_t batch_size = 64);
std::vector<ScoredSample> score_samples(const Model& model, const ImageSet& set,
                                        std::size_t batch_size = 64);
/// sigma(logit) in double precision.
double probability_of(float logit);

struct Evaluation {
  double loss = 0.0;  // mean BCE on hard labels
  EvalReport report;
};
Evaluation evaluate_model(const Model& model, const ImageSet& set, std::size_t batch_size = 64);

}  // namespace kdlite
