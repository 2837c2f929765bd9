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

#include "kdlite/distillation.hpp"

#include <algorithm>
#include <cmath>

#include "detail/op_support.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/ops.hpp"

namespace kdlite {

void LossWeights::validate() const {
  if (!(beta1 > 0.0) || !(beta2 > 0.0) || !(temperature > 0.0)) {
    throw ConfigError("beta1, beta2 and temperature must all be > 0");
  }
}

template <typename T>
Tensor<T> attention_map(const Tensor<T>& activations) {
  if (!activations.defined() || (activations.rank() != 3 && activations.rank() != 4)) {
    throw DimensionError("attention_map: expected a CxHxW (or NxCxHxW) tensor, got " +
                         (activations.defined() ? to_string(activations.shape())
                                                : std::string("undefined")));
  }
  const bool batched = activations.rank() == 4;
  const std::size_t n = batched ? activations.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t c = activations.dim(off), h = activations.dim(off + 1),
                    w = activations.dim(off + 2);
  const std::size_t plane = h * w;
  std::vector<T> q(n * plane, T(0));
  const T* a = activations.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    T* qs = q.data() + s * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* src = a + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) qs[i] += std::abs(src[i]);
    }
  }
  Shape shape = batched ? Shape{n, h, w} : Shape{h, w};
  auto an = activations.node();
  return detail::finish<T>(
      "attention_map", std::move(shape), std::move(q), {&activations},
      [=](const TensorNode<T>& node) {
        for (std::size_t s = 0; s < n; ++s) {
          const T* g = node.grad.data() + s * plane;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * plane;
            const T* src = an->data.data() + base;
            T* dst = an->grad.data() + base;
            for (std::size_t i = 0; i < plane; ++i) {
              const T v = src[i];
              if (v > T(0)) {
                dst[i] += g[i];
              } else if (v < T(0)) {
                dst[i] -= g[i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> at_loss(const Tensor<T>& teacher_map, const Tensor<T>& student_map,
                  double epsilon, AtReduction reduction) {
  if (!teacher_map.defined() || !student_map.defined() ||
      teacher_map.shape() != student_map.shape() ||
      (student_map.rank() != 2 && student_map.rank() != 3)) {
    throw ContractError(
        "at_loss: teacher and student maps must share the same H x W resolution (" +
        (teacher_map.defined() ? to_string(teacher_map.shape()) : std::string("?")) +
        " vs " +
        (student_map.defined() ? to_string(student_map.shape()) : std::string("?")) + ")");
  }
  const bool batched = student_map.rank() == 3;
  const std::size_t n = batched ? student_map.dim(0) : 1;
  const std::size_t plane = student_map.size() / n;
  const T* qt = teacher_map.data().data();
  const T* qs = student_map.data().data();

  // Normalized maps and per-sample losses, kept for the backward pass.
  std::vector<T> t_hat(student_map.size(), T(0));
  std::vector<T> s_hat(student_map.size(), T(0));
  std::vector<double> s_norm(n, 0.0);
  std::vector<double> losses(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    double tn = 0.0, sn = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      tn += static_cast<double>(qt[s * plane + i]) * qt[s * plane + i];
      sn += static_cast<double>(qs[s * plane + i]) * qs[s * plane + i];
    }
    tn = std::sqrt(tn);
    sn = std::sqrt(sn);
    s_norm[s] = sn;
    double dist = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double tv = tn < epsilon ? 0.0 : qt[s * plane + i] / tn;
      const double sv = sn < epsilon ? 0.0 : qs[s * plane + i] / sn;
      t_hat[s * plane + i] = static_cast<T>(tv);
      s_hat[s * plane + i] = static_cast<T>(sv);
      dist += (tv - sv) * (tv - sv);
    }
    losses[s] = std::sqrt(dist);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  const double divisor = reduction == AtReduction::kMean ? static_cast<double>(n) : 1.0;
  const T value = static_cast<T>(total / divisor);

  auto sn_node = student_map.node();
  return detail::finish<T>(
      "at_loss", Shape{}, std::vector<T>{value}, {&student_map},
      [=, t_hat = std::move(t_hat), s_hat = std::move(s_hat), s_norm = std::move(s_norm),
       losses = std::move(losses)](const TensorNode<T>& node) {
        const double g = static_cast<double>(node.grad[0]) / divisor;
        for (std::size_t s = 0; s < n; ++s) {
          if (s_norm[s] < epsilon || losses[s] == 0.0) continue;
          // dL/dQ_S = -(1/|Q_S|) (u - s_hat (s_hat . u)), u = (t_hat - s_hat) / L
          const std::size_t base = s * plane;
          double proj = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            const double u = (static_cast<double>(t_hat[base + i]) - s_hat[base + i]) / losses[s];
            proj += s_hat[base + i] * u;
          }
          const double k = -g / s_norm[s];
          for (std::size_t i = 0; i < plane; ++i) {
            const double u = (static_cast<double>(t_hat[base + i]) - s_hat[base + i]) / losses[s];
            sn_node->grad[base + i] += static_cast<T>(k * (u - s_hat[base + i] * proj));
          }
        }
      });
}

SoftProbabilities soften_logit(double theta, double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError("temperature must be > 0, got " + std::to_string(temperature));
  }
  const double z = theta / temperature;
  const double p1 = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return {1.0 - p1, p1};
}

std::string_view origin_name(SoftLabelOrigin origin) noexcept {
  return origin == SoftLabelOrigin::kSoftened ? "softened" : "replaced";
}

SoftLabelOrigin parse_origin(std::string_view name) {
  if (name == "softened") return SoftLabelOrigin::kSoftened;
  if (name == "replaced") return SoftLabelOrigin::kReplaced;
  throw DataError("unknown soft-label origin '" + std::string(name) + "'");
}

SoftLabelRecord make_soft_label(std::uint32_t id, int label, double theta,
                                double temperature, double replacement) {
  const bool predicted_positive = theta >= 0.0;  // sigma(theta) >= 0.5
  const bool correct = predicted_positive == (label == 1);
  SoftLabelRecord r;
  r.id = id;
  if (correct) {
    const auto p = soften_logit(theta, temperature);
    r.p0 = p.p0;
    r.p1 = p.p1;
    r.origin = SoftLabelOrigin::kSoftened;
  } else {
    r.p1 = label == 1 ? replacement : 1.0 - replacement;
    r.p0 = 1.0 - r.p1;
    r.origin = SoftLabelOrigin::kReplaced;
  }
  return r;
}

std::vector<SoftLabelRecord> generate_soft_labels(std::span<const LabeledLogit> samples,
                                                  double temperature, double replacement) {
  if (samples.empty()) throw ContractError("generate_soft_labels: empty dataset");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(replacement > 0.5 && replacement < 1.0)) {
    throw ConfigError("LSR replacement probability must be in (0.5, 1)");
  }
  std::vector<SoftLabelRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back(make_soft_label(s.id, s.label, s.logit, temperature, replacement));
  }
  return out;
}

std::vector<SoftLabelRecord> generate_soft_labels(const Model& student,
                                                  std::span<const std::uint32_t> ids,
                                                  std::span<const int> labels,
                                                  std::span<const float> images,
                                                  double temperature, double replacement,
                                                  std::size_t batch_size) {
  const std::size_t n = ids.size();
  if (n == 0) throw ContractError("generate_soft_labels: empty dataset");
  const std::size_t per_sample = numel(student.spec().input);
  if (labels.size() != n || images.size() != n * per_sample) {
    throw DimensionError("generate_soft_labels: ids, labels and images disagree");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<LabeledLogit> logits;
  logits.reserve(n);
  NoGradGuard no_grad;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape shape{count};
    shape.insert(shape.end(), student.spec().input.begin(), student.spec().input.end());
    Tensor<float> batch(shape, std::vector<float>(images.begin() + start * per_sample,
                                                  images.begin() + (start + count) * per_sample));
    const auto result = student.infer(batch);
    for (std::size_t i = 0; i < count; ++i) {
      logits.push_back({ids[start + i], labels[start + i],
                        static_cast<double>(result.logits.data()[i])});
    }
  }
  return generate_soft_labels(logits, temperature, replacement);
}

template <typename T>
Tensor<T> combined_loss(const Tensor<T>& student_probs, std::span<const T> soft_targets,
                        const Tensor<T>& at_term, const LossWeights& weights) {
  weights.validate();
  const Tensor<T> ce = binary_cross_entropy(student_probs, soft_targets, kProbabilityClamp);
  const Tensor<T> ce_term = scale(ce, static_cast<T>(1.0 / weights.beta1));
  if (!at_term.defined()) return ce_term;
  if (at_term.size() != 1) throw ContractError("combined_loss: AT term must be a scalar");
  Tensor<T> at_scalar = at_term.rank() == 0 ? at_term : reshape(at_term, Shape{});
  return add(ce_term, scale(at_scalar, static_cast<T>(1.0 / weights.beta2)));
}

double combined_loss_value(const SoftProbabilities& p, const SoftProbabilities& q,
                           double at_value, const LossWeights& weights) {
  weights.validate();
  auto clamp = [](double v) { return std::clamp(v, kProbabilityClamp, 1.0 - kProbabilityClamp); };
  const double ce = -(p.p0 * std::log(clamp(q.p0)) + p.p1 * std::log(clamp(q.p1)));
  return ce / weights.beta1 + at_value / weights.beta2;
}

template Tensor<float> attention_map(const Tensor<float>&);
template Tensor<double> attention_map(const Tensor<double>&);
template Tensor<float> at_loss(const Tensor<float>&, const Tensor<float>&, double, AtReduction);
template Tensor<double> at_loss(const Tensor<double>&, const Tensor<double>&, double, AtReduction);
template Tensor<float> combined_loss(const Tensor<float>&, std::span<const float>,
                                     const Tensor<float>&, const LossWeights&);
template Tensor<double> combined_loss(const Tensor<double>&, std::span<const double>,
                                      const Tensor<double>&, const LossWeights&);

}  // namespace kdlite
