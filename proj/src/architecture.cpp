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

#include "kdlite/architecture.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "detail/fp_env.hpp"
#include "kdlite/errors.hpp"

namespace kdlite {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::kConv:
      return "conv";
    case LayerKind::kBatchNorm:
      return "batchnorm";
    case LayerKind::kAvgPool:
      return "avgpool";
    case LayerKind::kDropout:
      return "dropout";
    case LayerKind::kFlatten:
      return "flatten";
    case LayerKind::kDense:
      return "dense";
    case LayerKind::kOutput:
      return "output";
  }
  return "?";
}

namespace {

LayerKind parse_layer_kind(std::string_view name) {
  for (auto kind : {LayerKind::kConv, LayerKind::kBatchNorm, LayerKind::kAvgPool,
                    LayerKind::kDropout, LayerKind::kFlatten, LayerKind::kDense,
                    LayerKind::kOutput}) {
    if (layer_kind_name(kind) == name) return kind;
  }
  throw DataError("unknown layer kind '" + std::string(name) + "'");
}

LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride, Shape out) {
  return {LayerKind::kConv, filters, kernel, stride, Activation::kNone, std::move(out)};
}
LayerSpec bn(Activation act, Shape out) {
  return {LayerKind::kBatchNorm, 0, 0, 0, act, std::move(out)};
}
LayerSpec pool(std::size_t size, std::size_t stride, Shape out) {
  return {LayerKind::kAvgPool, 0, size, stride, Activation::kNone, std::move(out)};
}
LayerSpec drop(Shape out) { return {LayerKind::kDropout, 0, 0, 0, Activation::kNone, std::move(out)}; }
LayerSpec flat(std::size_t n) { return {LayerKind::kFlatten, 0, 0, 0, Activation::kNone, {n}}; }
LayerSpec fc(std::size_t units, Activation act) {
  return {LayerKind::kDense, units, 0, 0, act, {units}};
}
LayerSpec head(std::size_t units) {
  return {LayerKind::kOutput, units, 0, 0, Activation::kSigmoid, {units}};
}

constexpr std::size_t kHookLayer = 15;

}  // namespace

std::string_view profile_name(Profile p) noexcept {
  return p == Profile::kFull ? "full" : "reduced";
}

Profile parse_profile(std::string_view name) {
  if (name == "full") return Profile::kFull;
  if (name == "reduced") return Profile::kReduced;
  throw ConfigError("unknown profile '" + std::string(name) + "' (full|reduced)");
}

Shape infer_output_shape(const LayerSpec& layer, const Shape& in) {
  switch (layer.kind) {
    case LayerKind::kConv:
      if (in.size() != 3) throw DimensionError("conv layer needs a CxHxW input");
      if (layer.units == 0) throw DimensionError("conv layer needs filters");
      return {layer.units, window_output_extent(in[1], layer.kernel, layer.stride),
              window_output_extent(in[2], layer.kernel, layer.stride)};
    case LayerKind::kAvgPool:
      if (in.size() != 3) throw DimensionError("avgpool layer needs a CxHxW input");
      return {in[0], window_output_extent(in[1], layer.kernel, layer.stride),
              window_output_extent(in[2], layer.kernel, layer.stride)};
    case LayerKind::kBatchNorm:
      if (in.size() != 3) throw DimensionError("batchnorm layer needs a CxHxW input");
      return in;
    case LayerKind::kDropout:
      return in;
    case LayerKind::kFlatten:
      return {numel(in)};
    case LayerKind::kDense:
    case LayerKind::kOutput:
      if (in.size() != 1) throw DimensionError("dense layer needs a flat input");
      if (layer.units == 0) throw DimensionError("dense layer needs units");
      return {layer.units};
  }
  throw DimensionError("unknown layer");
}

std::vector<Shape> compute_shapes(const ModelSpec& spec) {
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  Shape current = spec.input;
  for (const auto& layer : spec.layers) {
    current = infer_output_shape(layer, current);
    shapes.push_back(current);
  }
  return shapes;
}

void validate(const ModelSpec& spec) {
  if (spec.input.empty()) throw ContractError("model spec has no input shape");
  if (spec.layers.empty()) throw ContractError("model spec has no layers");
  const auto shapes = compute_shapes(spec);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i] != spec.layers[i].output) {
      throw DimensionError("layer " + std::to_string(i) + " (" +
                           std::string(layer_kind_name(spec.layers[i].kind)) +
                           ") declares output " + to_string(spec.layers[i].output) +
                           " but computes " + to_string(shapes[i]));
    }
  }
  std::size_t heads = 0;
  for (const auto& layer : spec.layers) heads += layer.kind == LayerKind::kOutput;
  if (heads != 1 || spec.layers.back().kind != LayerKind::kOutput) {
    throw ContractError("model must end in exactly one output layer");
  }
  if (spec.attention_hook) {
    const std::size_t hook = *spec.attention_hook;
    if (hook >= shapes.size() || shapes[hook].size() != 3) {
      throw ContractError("attention hook must name a layer with a CxHxW activation");
    }
  }
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  if (!(spec.bn_epsilon > 0.0) || !(spec.bn_momentum >= 0.0 && spec.bn_momentum <= 1.0)) {
    throw ConfigError("batch-norm epsilon must be > 0 and momentum in [0, 1]");
  }
}

ModelSpec lighter_cnn_spec(Profile profile) {
  ModelSpec spec;
  spec.profile = std::string(profile_name(profile));
  const auto A = Activation::kRelu;
  if (profile == Profile::kFull) {
    spec.input = {3, 300, 300};
    spec.layers = {
        conv(64, 8, 2, {64, 147, 147}),  bn(Activation::kLeakyRelu, {64, 147, 147}),
        conv(128, 8, 1, {128, 140, 140}), bn(A, {128, 140, 140}),
        pool(4, 2, {128, 69, 69}),        drop({128, 69, 69}),
        conv(256, 8, 1, {256, 62, 62}),   bn(A, {256, 62, 62}),
        conv(128, 8, 1, {128, 55, 55}),   bn(A, {128, 55, 55}),
        pool(4, 2, {128, 26, 26}),        drop({128, 26, 26}),
        conv(64, 8, 1, {64, 19, 19}),     bn(A, {64, 19, 19}),
        conv(32, 5, 2, {32, 8, 8}),       bn(A, {32, 8, 8}),
        conv(32, 5, 1, {32, 4, 4}),       bn(A, {32, 4, 4}),
        flat(512),                        fc(32, A),
        fc(4, A),                         head(1),
    };
  } else {
    spec.input = {3, 96, 96};
    spec.layers = {
        conv(8, 3, 2, {8, 47, 47}),   bn(Activation::kLeakyRelu, {8, 47, 47}),
        conv(16, 3, 1, {16, 45, 45}), bn(A, {16, 45, 45}),
        pool(4, 2, {16, 21, 21}),     drop({16, 21, 21}),
        conv(16, 3, 1, {16, 19, 19}), bn(A, {16, 19, 19}),
        conv(16, 3, 1, {16, 17, 17}), bn(A, {16, 17, 17}),
        pool(2, 2, {16, 8, 8}),       drop({16, 8, 8}),
        conv(16, 2, 1, {16, 7, 7}),   bn(A, {16, 7, 7}),
        conv(16, 2, 1, {16, 6, 6}),   bn(A, {16, 6, 6}),
        conv(16, 3, 1, {16, 4, 4}),   bn(A, {16, 4, 4}),
        flat(256),                    fc(32, A),
        fc(4, A),                     head(1),
    };
  }
  spec.attention_hook = kHookLayer;
  validate(spec);
  return spec;
}

ModelSpec surrogate_teacher_spec(Profile profile) {
  ModelSpec spec = lighter_cnn_spec(profile);
  spec.profile += "-teacher";
  for (auto& layer : spec.layers) {
    if (layer.kind == LayerKind::kConv) layer.units *= 2;
  }
  // Re-derive the declared shapes from the widened filters.
  Shape current = spec.input;
  for (auto& layer : spec.layers) {
    current = infer_output_shape(layer, current);
    layer.output = current;
  }
  validate(spec);
  return spec;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Shape parse_shape(std::string_view s) {
  Shape shape;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = std::min(s.find('x', pos), s.size());
    std::size_t v = 0;
    const auto* first = s.data() + pos;
    const auto* last = s.data() + next;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw DataError("bad shape '" + std::string(s) + "'");
    shape.push_back(v);
    pos = next + 1;
  }
  return shape;
}

std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("bad integer '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw DataError("bad number '" + s + "'");
  }
  if (used != s.size()) throw DataError("bad number '" + s + "'");
  return v;
}

}  // namespace

std::string to_text(const ModelSpec& spec) {
  std::ostringstream os;
  os << "kdlite-model-spec 1\n";
  os << "profile " << spec.profile << '\n';
  os << "input " << to_string(spec.input) << '\n';
  os << "attention_hook "
     << (spec.attention_hook ? std::to_string(*spec.attention_hook) : std::string("none"))
     << '\n';
  os << "dropout_rate " << format_double(spec.dropout_rate) << '\n';
  os << "leaky_slope " << format_double(spec.leaky_slope) << '\n';
  os << "bn_momentum " << format_double(spec.bn_momentum) << '\n';
  os << "bn_epsilon " << format_double(spec.bn_epsilon) << '\n';
  for (const auto& layer : spec.layers) {
    os << "layer " << layer_kind_name(layer.kind) << " units=" << layer.units
       << " kernel=" << layer.kernel << " stride=" << layer.stride
       << " activation=" << activation_name(layer.activation)
       << " output=" << to_string(layer.output) << '\n';
  }
  os << "end\n";
  return os.str();
}

ModelSpec parse_model_spec(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "kdlite-model-spec 1") {
    throw DataError("model spec block has an unknown header");
  }
  ModelSpec spec;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end") {
      ended = true;
      break;
    }
    std::string value;
    ls >> value;
    if (key == "profile") {
      spec.profile = value;
    } else if (key == "input") {
      spec.input = parse_shape(value);
    } else if (key == "attention_hook") {
      if (value == "none") {
        spec.attention_hook.reset();
      } else {
        spec.attention_hook = parse_size(value);
      }
    } else if (key == "dropout_rate") {
      spec.dropout_rate = parse_real(value);
    } else if (key == "leaky_slope") {
      spec.leaky_slope = parse_real(value);
    } else if (key == "bn_momentum") {
      spec.bn_momentum = parse_real(value);
    } else if (key == "bn_epsilon") {
      spec.bn_epsilon = parse_real(value);
    } else if (key == "layer") {
      LayerSpec layer;
      layer.kind = parse_layer_kind(value);
      std::string field;
      while (ls >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw DataError("bad layer field '" + field + "'");
        const std::string name = field.substr(0, eq);
        const std::string v = field.substr(eq + 1);
        if (name == "units") {
          layer.units = parse_size(v);
        } else if (name == "kernel") {
          layer.kernel = parse_size(v);
        } else if (name == "stride") {
          layer.stride = parse_size(v);
        } else if (name == "activation") {
          try {
            layer.activation = parse_activation(v);
          } catch (const ConfigError& e) {
            throw DataError(e.what());
          }
        } else if (name == "output") {
          layer.output = parse_shape(v);
        } else {
          throw DataError("unknown layer field '" + name + "'");
        }
      }
      spec.layers.push_back(std::move(layer));
    } else {
      throw DataError("unknown model spec key '" + key + "'");
    }
  }
  if (!ended) throw DataError("model spec block is not terminated");
  validate(spec);
  return spec;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelSpec& spec) {
  std::vector<std::pair<std::string, Shape>> layout;
  Shape current = spec.input;
  std::size_t n_conv = 0, n_bn = 0, n_fc = 0;
  for (const auto& layer : spec.layers) {
    const Shape out = infer_output_shape(layer, current);
    switch (layer.kind) {
      case LayerKind::kConv: {
        const std::string p = "conv" + std::to_string(++n_conv);
        layout.emplace_back(p + ".weight",
                            Shape{layer.units, current[0], layer.kernel, layer.kernel});
        layout.emplace_back(p + ".bias", Shape{layer.units});
        break;
      }
      case LayerKind::kBatchNorm: {
        const std::string p = "bn" + std::to_string(++n_bn);
        for (const char* suffix : {".gamma", ".beta", ".running_mean", ".running_var"}) {
          layout.emplace_back(p + suffix, Shape{current[0]});
        }
        break;
      }
      case LayerKind::kDense:
      case LayerKind::kOutput: {
        const std::string p =
            layer.kind == LayerKind::kOutput ? std::string("output") : "fc" + std::to_string(++n_fc);
        layout.emplace_back(p + ".weight", Shape{current[0], layer.units});
        layout.emplace_back(p + ".bias", Shape{layer.units});
        break;
      }
      default:
        break;
    }
    current = out;
  }
  return layout;
}

namespace {

bool is_running_stat(const std::string& name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

}  // namespace

ParameterCount count_parameters(const ModelSpec& spec) {
  ParameterCount count;
  for (const auto& [name, shape] : parameter_layout(spec)) {
    const std::size_t n = numel(shape);
    count.total += n;
    if (!is_running_stat(name)) count.trainable += n;
  }
  return count;
}

template <typename T>
BasicModel<T>::BasicModel(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed) {
  validate(spec_);
  Rng rng(seed_);
  Shape current = spec_.input;
  for (const auto& [name, shape] : parameter_layout(spec_)) {
    Parameter<T> p;
    p.name = name;
    p.trainable = !is_running_stat(name);
    T fill = T(0);
    if (name.ends_with(".gamma") || name.ends_with(".running_var")) fill = T(1);
    p.value = Tensor<T>(shape, fill);
    if (name.ends_with(".weight")) {
      // He-normal: fan-in is every dimension but the first for conv weights
      // (C*k*k) and the first dimension for dense weights (D x M).
      const bool conv_weight = shape.size() == 4;
      const std::size_t fan_in = conv_weight ? shape[1] * shape[2] * shape[3] : shape[0];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (auto& v : p.value.data()) v = static_cast<T>(stddev * standard_normal(rng));
    }
    p.value.set_requires_grad(p.trainable);
    params_.push_back(std::move(p));
  }
  build_layout();
}

template <typename T>
BasicModel<T> BasicModel<T>::from_parameters(ModelSpec spec, std::uint64_t seed,
                                             std::vector<Parameter<T>> parameters) {
  validate(spec);
  const auto layout = parameter_layout(spec);
  if (layout.size() != parameters.size()) {
    throw DataError("model expects " + std::to_string(layout.size()) +
                    " parameter tensors, got " + std::to_string(parameters.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (parameters[i].name != layout[i].first ||
        !parameters[i].value.defined() || parameters[i].value.shape() != layout[i].second) {
      throw DataError("parameter " + std::to_string(i) + " should be " + layout[i].first +
                      " [" + to_string(layout[i].second) + "]");
    }
    parameters[i].value.set_requires_grad(parameters[i].trainable);
  }
  BasicModel model;
  model.spec_ = std::move(spec);
  model.seed_ = seed;
  model.params_ = std::move(parameters);
  model.build_layout();
  return model;
}

template <typename T>
void BasicModel<T>::build_layout() {
  slots_.clear();
  std::size_t next = 0;
  for (const auto& layer : spec_.layers) {
    Slots s;
    s.first = next;
    switch (layer.kind) {
      case LayerKind::kConv:
      case LayerKind::kDense:
      case LayerKind::kOutput:
        s.count = 2;
        break;
      case LayerKind::kBatchNorm:
        s.count = 4;
        break;
      default:
        s.count = 0;
    }
    next += s.count;
    slots_.push_back(s);
  }
}

template <typename T>
const Parameter<T>& BasicModel<T>::parameter(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
std::vector<Tensor<T>> BasicModel<T>::trainable_tensors() const {
  std::vector<Tensor<T>> out;
  for (const auto& p : params_) {
    if (p.trainable) out.push_back(p.value);
  }
  return out;
}

template <typename T>
ParameterCount BasicModel<T>::count_parameters() const {
  ParameterCount count;
  for (const auto& p : params_) {
    count.total += p.value.size();
    if (p.trainable) count.trainable += p.value.size();
  }
  return count;
}

template <typename T>
void BasicModel<T>::set_trainable(bool trainable) {
  for (auto& p : params_) {
    p.trainable = trainable && !is_running_stat(p.name);
    p.value.set_requires_grad(p.trainable);
  }
}

template <typename T>
ForwardResult<T> BasicModel<T>::forward(const Tensor<T>& batch, Mode mode, Rng* rng) {
  return run(batch, mode, rng);
}

template <typename T>
ForwardResult<T> BasicModel<T>::infer(const Tensor<T>& batch) const {
  return run(batch, Mode::kEval, nullptr);
}

template <typename T>
ForwardResult<T> BasicModel<T>::run(const Tensor<T>& batch, Mode mode, Rng* rng) const {
  detail::FlushDenormals ftz;
  if (!batch.defined() || batch.rank() != spec_.input.size() + 1 ||
      !std::equal(spec_.input.begin(), spec_.input.end(), batch.shape().begin() + 1)) {
    throw DimensionError("model expects batches of " + to_string(spec_.input) + ", got " +
                         (batch.defined() ? to_string(batch.shape()) : "undefined"));
  }
  const BatchNormOptions bn_options{spec_.bn_momentum, spec_.bn_epsilon};
  ForwardResult<T> result;
  Tensor<T> x = batch;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& layer = spec_.layers[i];
    const Parameter<T>* p = params_.data() + slots_[i].first;
    switch (layer.kind) {
      case LayerKind::kConv:
        x = conv2d(x, p[0].value, p[1].value, layer.stride);
        break;
      case LayerKind::kBatchNorm: {
        // The stats handles share storage with the running_* parameters.
        BatchNormStats<T> stats;
        stats.running_mean = p[2].value;
        stats.running_var = p[3].value;
        stats.initialized = true;
        x = batchnorm(x, p[0].value, p[1].value, stats, mode, bn_options);
        x = activation(x, layer.activation, spec_.leaky_slope);
        break;
      }
      case LayerKind::kAvgPool:
        x = avgpool2d(x, layer.kernel, layer.stride);
        break;
      case LayerKind::kDropout:
        if (mode == Mode::kTrain && spec_.dropout_rate > 0.0) {
          if (rng == nullptr) throw ContractError("train-mode forward needs an rng for dropout");
          x = dropout(x, spec_.dropout_rate, mode, *rng);
        }
        break;
      case LayerKind::kFlatten:
        x = flatten(x);
        break;
      case LayerKind::kDense:
        x = activation(dense(x, p[0].value, p[1].value), layer.activation, spec_.leaky_slope);
        break;
      case LayerKind::kOutput:
        x = dense(x, p[0].value, p[1].value);
        break;
    }
    if (spec_.attention_hook && *spec_.attention_hook == i) result.attention_source = x;
  }
  result.logits = x;
  return result;
}

template <typename T>
BasicModel<T> BasicModel<T>::clone() const {
  std::vector<Parameter<T>> copies;
  copies.reserve(params_.size());
  for (const auto& p : params_) copies.push_back({p.name, p.value.detach(), p.trainable});
  return from_parameters(spec_, seed_, std::move(copies));
}

template class BasicModel<float>;
template class BasicModel<double>;

Model build_lighter_cnn(Profile profile, std::uint64_t seed) {
  return Model(lighter_cnn_spec(profile), seed);
}

Model build_surrogate_teacher(std::uint64_t seed, Profile profile) {
  return Model(surrogate_teacher_spec(profile), seed);
}

}  // namespace kdlite
