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

// Differentiable operators. Image tensors are N x C x H x W. Convolution and
// pooling are "valid" (no padding): out = floor((in - k) / stride) + 1.
// Every operator checks its output for NaN/Inf and throws NumericError
// naming itself.

#include <cstddef>
#include <string_view>

#include "kdlite/random.hpp"
#include "kdlite/tensor.hpp"

namespace kdlite {

enum class Activation { kNone, kRelu, kLeakyRelu, kSigmoid };

std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kDefaultDropoutRate = 0.25;
inline constexpr double kDefaultBatchNormMomentum = 0.99;
inline constexpr double kDefaultBatchNormEpsilon = 1e-5;

/// Spatial extent of a valid window sweep. Throws DimensionError when the
/// window does not fit.
std::size_t window_output_extent(std::size_t in, std::size_t window,
                                 std::size_t stride);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::size_t stride);

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, std::size_t size, std::size_t stride);

/// Running statistics of one batch-norm layer. Not trainable.
template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  bool initialized = false;

  BatchNormStats() = default;
  /// Zero mean, unit variance, marked initialized.
  explicit BatchNormStats(std::size_t channels);
};

struct BatchNormOptions {
  double momentum = kDefaultBatchNormMomentum;
  double epsilon = kDefaultBatchNormEpsilon;
};

/// Per-channel normalization over N x H x W. Train mode uses (biased) batch
/// statistics and updates `stats` as running = m * running + (1 - m) * batch;
/// eval mode uses the running statistics and throws StateError when they
/// were never initialized.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                    const BatchNormOptions& options = {});

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind,
                     double leaky_slope = kDefaultLeakySlope);

/// input N x D, weight D x M, bias M.
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight,
                const Tensor<T>& bias);

/// Inverted dropout. Throws ConfigError unless 0 <= rate < 1.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng);

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape);

/// N x ... -> N x prod(...)
template <typename T>
Tensor<T> flatten(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> square(const Tensor<T>& a);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

/// Mean over the batch of -(p log q + (1 - p) log(1 - q)), with q = probs[i]
/// clamped to [clamp, 1 - clamp] (gradient zero outside the clamp).
/// probs is N or N x 1; targets holds p per sample.
template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& probs, std::span<const T> targets,
                               double clamp = 1e-7);

}  // namespace kdlite
