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

// Declarative model construction.
//
// A ModelSpec is an ordered list of layers with their declared per-sample
// output shapes; validate() replays the shape algebra and rejects any
// mismatch. BasicModel instantiates the parameters, runs the forward pass and
// exposes the activation at the attention hook alongside the logit.
//
// Two profiles are shipped:
//
//   full     3x300x300 input, the 13-layer lighter CNN (7 conv + batch norm
//            blocks, 2 average pools, 2 dropouts, 3 dense layers); the hook
//            is the 32x8x8 block before the last convolution.
//   reduced  3x96x96 input with the same topology and smaller kernels and
//            channel counts, for tests and desk-scale runs:
//
//     layer          filters  size/stride  activation  output
//     conv           8        3/2                      8x47x47
//     batchnorm                            leaky_relu  8x47x47
//     conv           16       3/1                      16x45x45
//     batchnorm                            relu        16x45x45
//     avgpool                 4/2                      16x21x21
//     dropout                                          16x21x21
//     conv           16       3/1                      16x19x19
//     batchnorm                            relu        16x19x19
//     conv           16       3/1                      16x17x17
//     batchnorm                            relu        16x17x17
//     avgpool                 2/2                      16x8x8
//     dropout                                          16x8x8
//     conv           16       2/1                      16x7x7
//     batchnorm                            relu        16x7x7
//     conv           16       2/1                      16x6x6   <- hook
//     batchnorm                            relu        16x6x6
//     conv           16       3/1                      16x4x4
//     batchnorm                            relu        16x4x4
//     flatten                                          256
//     dense          32                    relu        32
//     dense          4                     relu        4
//     output         1                     sigmoid     1
//
// The surrogate teacher doubles every convolution's filter count and keeps
// the spatial layout, so its hook has the student's resolution.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdlite/ops.hpp"
#include "kdlite/random.hpp"
#include "kdlite/tensor.hpp"

namespace kdlite {

enum class LayerKind { kConv, kBatchNorm, kAvgPool, kDropout, kFlatten, kDense, kOutput };

std::string_view layer_kind_name(LayerKind kind) noexcept;

enum class Profile { kFull, kReduced };

std::string_view profile_name(Profile p) noexcept;
Profile parse_profile(std::string_view name);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  std::size_t units = 0;   // conv filters, dense/output units
  std::size_t kernel = 0;  // conv and pool window
  std::size_t stride = 0;
  Activation activation = Activation::kNone;
  Shape output;  // declared per-sample output shape

  bool operator==(const LayerSpec&) const = default;
};

struct ModelSpec {
  std::string profile;
  Shape input;  // per-sample, e.g. {3, 300, 300}
  std::vector<LayerSpec> layers;
  std::optional<std::size_t> attention_hook;
  double dropout_rate = kDefaultDropoutRate;
  double leaky_slope = kDefaultLeakySlope;
  double bn_momentum = kDefaultBatchNormMomentum;
  double bn_epsilon = kDefaultBatchNormEpsilon;

  bool operator==(const ModelSpec&) const = default;
};

/// Per-sample output shape of `layer` applied to `in`.
Shape infer_output_shape(const LayerSpec& layer, const Shape& in);

/// Shapes computed layer by layer from spec.input.
std::vector<Shape> compute_shapes(const ModelSpec& spec);

/// Throws DimensionError or ContractError when declared shapes disagree with
/// the shape algebra, the hook is not a 3D activation, or the model does not
/// end in exactly one output layer.
void validate(const ModelSpec& spec);

ModelSpec lighter_cnn_spec(Profile profile);
ModelSpec surrogate_teacher_spec(Profile profile);

/// Canonical text form; parse_model_spec(to_text(s)) == s.
std::string to_text(const ModelSpec& spec);
ModelSpec parse_model_spec(std::string_view text);

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t total = 0;

  bool operator==(const ParameterCount&) const = default;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;            // N x units of the output layer (pre-sigmoid)
  Tensor<T> attention_source;  // N x C x H x W at the hook, undefined if none
};

template <typename T>
class BasicModel {
 public:
  /// He-normal conv/dense weights, zero biases, gamma 1, beta 0, running
  /// mean 0 and variance 1, all drawn from `seed`.
  BasicModel(ModelSpec spec, std::uint64_t seed);

  /// Adopts existing parameters; names and shapes must match what the spec
  /// would create.
  static BasicModel from_parameters(ModelSpec spec, std::uint64_t seed,
                                    std::vector<Parameter<T>> parameters);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::span<Parameter<T>> parameters() noexcept { return params_; }
  std::span<const Parameter<T>> parameters() const noexcept { return params_; }
  const Parameter<T>& parameter(std::string_view name) const;

  /// Handles to the trainable tensors, in parameter order.
  std::vector<Tensor<T>> trainable_tensors() const;

  ParameterCount count_parameters() const;

  void set_trainable(bool trainable);
  void freeze() { set_trainable(false); }

  /// Train mode updates batch-norm running statistics and draws dropout
  /// masks from `rng` (required when dropout is active).
  ForwardResult<T> forward(const Tensor<T>& batch, Mode mode, Rng* rng = nullptr);

  /// Eval-mode forward; never mutates the model.
  ForwardResult<T> infer(const Tensor<T>& batch) const;

  /// Deep copy with independent parameter storage.
  BasicModel clone() const;

  /// Per-sample output shapes (one per layer).
  std::vector<Shape> layer_shapes() const { return compute_shapes(spec_); }

 private:
  BasicModel() = default;
  void build_layout();
  ForwardResult<T> run(const Tensor<T>& batch, Mode mode, Rng* rng) const;

  struct Slots {
    std::size_t first = 0;  // index of the first parameter of this layer
    std::size_t count = 0;
  };

  ModelSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<Parameter<T>> params_;
  std::vector<Slots> slots_;
};

using Model = BasicModel<float>;

/// Parameter names and shapes a spec creates, in order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec);

/// Closed-form parameter count of a spec (all parameters trainable except
/// batch-norm running statistics).
ParameterCount count_parameters(const ModelSpec& spec);

template <typename T>
ParameterCount count_parameters(const BasicModel<T>& model) {
  return model.count_parameters();
}

Model build_lighter_cnn(Profile profile, std::uint64_t seed);
Model build_surrogate_teacher(std::uint64_t seed, Profile profile = Profile::kFull);

}  // namespace kdlite
