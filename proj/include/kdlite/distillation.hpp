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

// Attention transfer and label-smoothing targets for teacher/student runs.
//
//   attention map   Q[h, w] = sum_c |A[c, h, w]|
//   AT loss         || Q_T / ||Q_T|| - Q_S / ||Q_S|| ||_2   (vectorized maps)
//   soft label      p1 = 1 / (1 + exp(-theta / T)), p0 = 1 - p1
//   combined loss   (1 / beta1) * CE(p, q) + (1 / beta2) * L_AT
//
// The binary head emits one logit; p1 = sigma(theta / T) is the two-logit
// softmax with theta_0 fixed at 0.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kdlite/architecture.hpp"
#include "kdlite/tensor.hpp"

namespace kdlite {

inline constexpr double kDefaultAtEpsilon = 1e-12;
inline constexpr double kDefaultLsrReplacement = 0.6;
inline constexpr double kProbabilityClamp = 1e-7;

struct LossWeights {
  double beta1 = 1.0;
  double beta2 = 2.0;
  double temperature = 5.0;

  /// Throws ConfigError unless all three are strictly positive.
  void validate() const;
};

enum class AtReduction { kMean, kSum };

/// Q = sum over channels of |A|. Accepts C x H x W (returns H x W) or
/// N x C x H x W (returns N x H x W). The subgradient of |x| at 0 is 0.
template <typename T>
Tensor<T> attention_map(const Tensor<T>& activations);

/// L_AT between teacher and student maps of identical H x W. Maps are H x W
/// or N x H x W; batches are reduced per `reduction`. The teacher map is
/// treated as a constant. A map whose norm is below `epsilon` normalizes to
/// the zero vector. Throws ContractError on a resolution mismatch.
template <typename T>
Tensor<T> at_loss(const Tensor<T>& teacher_map, const Tensor<T>& student_map,
                  double epsilon = kDefaultAtEpsilon,
                  AtReduction reduction = AtReduction::kMean);

struct SoftProbabilities {
  double p0 = 0.5;
  double p1 = 0.5;
};

/// Temperature-softened two-class probabilities of a single logit.
SoftProbabilities soften_logit(double theta, double temperature);

enum class SoftLabelOrigin { kSoftened, kReplaced };

std::string_view origin_name(SoftLabelOrigin origin) noexcept;
SoftLabelOrigin parse_origin(std::string_view name);

struct SoftLabelRecord {
  std::uint32_t id = 0;
  double p0 = 0.5;
  double p1 = 0.5;
  SoftLabelOrigin origin = SoftLabelOrigin::kSoftened;
};

/// Soft label of one sample given student_1's logit. A prediction counts as
/// correct when (sigma(theta) >= 0.5) == (label == 1). Correct samples get
/// soften_logit(theta, T); the others get `replacement` on the true class and
/// 1 - replacement on the other.
SoftLabelRecord make_soft_label(std::uint32_t id, int label, double theta,
                                double temperature,
                                double replacement = kDefaultLsrReplacement);

/// Source of logits for generate_soft_labels; implemented over a model in
/// the training pipeline.
struct LabeledLogit {
  std::uint32_t id = 0;
  int label = 0;
  double logit = 0.0;
};

/// Applies make_soft_label to every sample. Throws ContractError on an empty
/// set and ConfigError unless T > 0 and 0.5 < replacement < 1.
std::vector<SoftLabelRecord> generate_soft_labels(std::span<const LabeledLogit> samples,
                                                  double temperature,
                                                  double replacement = kDefaultLsrReplacement);

/// Runs `student` in eval mode over `images` (N x C x H x W in batches of
/// `batch_size`) and builds the soft labels.
std::vector<SoftLabelRecord> generate_soft_labels(const Model& student,
                                                  std::span<const std::uint32_t> ids,
                                                  std::span<const int> labels,
                                                  std::span<const float> images,
                                                  double temperature,
                                                  double replacement = kDefaultLsrReplacement,
                                                  std::size_t batch_size = 64);

/// (1/beta1) * CE(p, q) + (1/beta2) * L_AT with q = student probabilities
/// (N or N x 1), p = soft targets p1 per sample, CE clamped to
/// [1e-7, 1 - 1e-7]. `at_term` is a scalar tensor (possibly from at_loss).
template <typename T>
Tensor<T> combined_loss(const Tensor<T>& student_probs, std::span<const T> soft_targets,
                        const Tensor<T>& at_term, const LossWeights& weights);

/// Scalar version for checking: -(p0 log q0 + p1 log q1) / beta1 + L_AT / beta2.
double combined_loss_value(const SoftProbabilities& p, const SoftProbabilities& q,
                           double at_value, const LossWeights& weights);

}  // namespace kdlite
