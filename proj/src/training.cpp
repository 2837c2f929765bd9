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

#include "kdlite/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <thread>

#include "detail/fp_env.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/ops.hpp"

namespace kdlite {

namespace {

// Independent random streams of a run.
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kDropoutStream = 0x64726f70;  // "drop"
constexpr std::uint64_t kAugmentStream = 0x6175676d;  // "augm"
constexpr std::uint64_t kSplitStream = 0x73706c74;    // "splt"
constexpr std::uint64_t kFoldStream = 0x666f6c64;     // "fold"
constexpr std::uint64_t kSubsetStream = 0x73756273;   // "subs"
constexpr std::uint64_t kStudentStream = 0x73747564;  // "stud"

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const auto n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a positive number");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (max_epochs == 0) throw ConfigError("max epochs must be positive");
  weights.validate();
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw ConfigError("subset fraction must be in (0, 1]");
  }
  if (!(lsr_replacement > 0.5 && lsr_replacement < 1.0)) {
    throw ConfigError("LSR replacement probability must be in (0.5, 1)");
  }
  if (!(augment.zoom_min > 0.0 && augment.zoom_min <= augment.zoom_max)) {
    throw ConfigError("zoom range must satisfy 0 < zoom_min <= zoom_max");
  }
  if (early_stopping && patience == 0) throw ConfigError("patience must be positive");
  if (!(at_epsilon >= 0.0)) throw ConfigError("AT epsilon must be >= 0");
  if (lr_schedule == LrSchedule::kStep && (lr_step_epochs == 0 || !(lr_step_gamma > 0.0))) {
    throw ConfigError("step schedule needs lr_step_epochs > 0 and lr_step_gamma > 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_epsilon > 0.0)) {
    throw ConfigError("Adam needs betas in [0, 1) and epsilon > 0");
  }
  if (workers == 0) throw ConfigError("workers must be positive");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
  if (lr_schedule == LrSchedule::kConstant) return learning_rate;
  const auto steps = static_cast<double>((epoch - 1) / lr_step_epochs);
  return learning_rate * std::pow(lr_step_gamma, steps);
}

void apply_config_text(TrainConfig& c, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string line(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string v = trim(std::string_view(line).substr(eq + 1));
    if (key == "learning_rate") c.learning_rate = parse_real(key, v);
    else if (key == "batch_size") c.batch_size = parse_count(key, v);
    else if (key == "max_epochs") c.max_epochs = parse_count(key, v);
    else if (key == "beta1") c.weights.beta1 = parse_real(key, v);
    else if (key == "beta2") c.weights.beta2 = parse_real(key, v);
    else if (key == "temperature") c.weights.temperature = parse_real(key, v);
    else if (key == "subset_fraction") c.subset_fraction = parse_real(key, v);
    else if (key == "lsr_replacement") c.lsr_replacement = parse_real(key, v);
    else if (key == "seed") c.seed = parse_count(key, v);
    else if (key == "augment") c.augment.enabled = parse_bool(key, v);
    else if (key == "augment_rotate") c.augment.rotate = parse_bool(key, v);
    else if (key == "augment_hflip") c.augment.hflip = parse_bool(key, v);
    else if (key == "augment_vflip") c.augment.vflip = parse_bool(key, v);
    else if (key == "augment_zoom") c.augment.zoom = parse_bool(key, v);
    else if (key == "zoom_min") c.augment.zoom_min = parse_real(key, v);
    else if (key == "zoom_max") c.augment.zoom_max = parse_real(key, v);
    else if (key == "profile") c.profile = parse_profile(v);
    else if (key == "early_stopping") c.early_stopping = parse_bool(key, v);
    else if (key == "patience") c.patience = parse_count(key, v);
    else if (key == "fixed_budget") {
      if (parse_bool(key, v)) c.use_fixed_budget();
    } else if (key == "at_reduction") {
      if (v == "mean") c.at_reduction = AtReduction::kMean;
      else if (v == "sum") c.at_reduction = AtReduction::kSum;
      else throw ConfigError("at_reduction must be mean or sum");
    } else if (key == "at_epsilon") c.at_epsilon = parse_real(key, v);
    else if (key == "lr_schedule") {
      if (v == "constant") c.lr_schedule = LrSchedule::kConstant;
      else if (v == "step") c.lr_schedule = LrSchedule::kStep;
      else throw ConfigError("lr_schedule must be constant or step");
    } else if (key == "lr_step_epochs") c.lr_step_epochs = parse_count(key, v);
    else if (key == "lr_step_gamma") c.lr_step_gamma = parse_real(key, v);
    else if (key == "adam_beta1") c.adam_beta1 = parse_real(key, v);
    else if (key == "adam_beta2") c.adam_beta2 = parse_real(key, v);
    else if (key == "adam_epsilon") c.adam_epsilon = parse_real(key, v);
    else if (key == "workers") c.workers = parse_count(key, v);
    else if (key == "deterministic") c.deterministic = parse_bool(key, v);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  TrainConfig c;
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  apply_config_text(c, text);
  c.validate();
  return c;
}

std::string to_text(const TrainConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::string out;
  auto kv = [&](const char* k, const std::string& v) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  };
  kv("learning_rate", real_text(c.learning_rate));
  kv("batch_size", std::to_string(c.batch_size));
  kv("max_epochs", std::to_string(c.max_epochs));
  kv("beta1", real_text(c.weights.beta1));
  kv("beta2", real_text(c.weights.beta2));
  kv("temperature", real_text(c.weights.temperature));
  kv("subset_fraction", real_text(c.subset_fraction));
  kv("lsr_replacement", real_text(c.lsr_replacement));
  kv("seed", std::to_string(c.seed));
  kv("augment", b(c.augment.enabled));
  kv("augment_rotate", b(c.augment.rotate));
  kv("augment_hflip", b(c.augment.hflip));
  kv("augment_vflip", b(c.augment.vflip));
  kv("augment_zoom", b(c.augment.zoom));
  kv("zoom_min", real_text(c.augment.zoom_min));
  kv("zoom_max", real_text(c.augment.zoom_max));
  kv("profile", std::string(profile_name(c.profile)));
  kv("early_stopping", b(c.early_stopping));
  kv("patience", std::to_string(c.patience));
  kv("at_reduction", c.at_reduction == AtReduction::kMean ? "mean" : "sum");
  kv("at_epsilon", real_text(c.at_epsilon));
  kv("lr_schedule", c.lr_schedule == LrSchedule::kConstant ? "constant" : "step");
  kv("lr_step_epochs", std::to_string(c.lr_step_epochs));
  kv("lr_step_gamma", real_text(c.lr_step_gamma));
  kv("adam_beta1", real_text(c.adam_beta1));
  kv("adam_beta2", real_text(c.adam_beta2));
  kv("adam_epsilon", real_text(c.adam_epsilon));
  kv("workers", std::to_string(c.workers));
  kv("deterministic", b(c.deterministic));
  return out;
}

std::string config_digest(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

void check_binary(std::span<const int> labels) {
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
  }
}

/// Marks `total` indices, apportioned to the classes by largest remainder
/// and drawn uniformly within each class.
std::vector<char> stratified_pick(std::span<const int> labels, std::size_t total, Rng& rng) {
  const std::size_t n = labels.size();
  std::array<std::vector<std::size_t>, 2> members;
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::array<std::size_t, 2> quota{}, remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    quota[c] = members[c].size() * total / n;
    remainder[c] = members[c].size() * total % n;
    assigned += quota[c];
  }
  // At most one leftover sample for two classes.
  if (assigned < total) {
    const std::size_t c = remainder[1] > remainder[0] ? 1 : 0;
    ++quota[c];
  }
  std::vector<char> chosen(n, 0);
  for (std::size_t c = 0; c < 2; ++c) {
    shuffle(members[c].begin(), members[c].end(), rng);
    for (std::size_t j = 0; j < quota[c]; ++j) chosen[members[c][j]] = 1;
  }
  return chosen;
}

}  // namespace

Split split_dataset(std::span<const int> labels, std::uint64_t seed, std::size_t ratio_train,
                    std::size_t ratio_test) {
  check_binary(labels);
  const std::size_t parts = ratio_train + ratio_test;
  if (ratio_train == 0 || ratio_test == 0) throw ConfigError("split ratios must be positive");
  const std::size_t n = labels.size();
  if (n < parts) {
    throw ConfigError("a " + std::to_string(ratio_train) + "/" + std::to_string(ratio_test) +
                      " split needs at least " + std::to_string(parts) + " samples, got " +
                      std::to_string(n));
  }
  const std::size_t test_total = (2 * n * ratio_test + parts) / (2 * parts);  // round half up
  Rng rng(derive_seed(seed, kSplitStream));
  const auto chosen = stratified_pick(labels, test_total, rng);
  Split s;
  for (std::size_t i = 0; i < n; ++i) (chosen[i] ? s.test : s.train).push_back(i);
  return s;
}

std::vector<Fold> kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  check_binary(labels);
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (k > labels.size()) {
    throw ConfigError("k-fold with k = " + std::to_string(k) + " exceeds the " +
                      std::to_string(labels.size()) + " samples");
  }
  Rng rng(derive_seed(seed, kFoldStream));
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t dealer = 0;
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) fold_of[i] = dealer++ % k;
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(i);
    }
  }
  return folds;
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction,
                                           std::uint64_t seed) {
  check_binary(labels);
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subset fraction must be in (0, 1]");
  if (labels.empty()) throw ContractError("stratified_subset of an empty set");
  const auto n = labels.size();
  const auto total = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)), 1, n);
  Rng rng(derive_seed(seed, kSubsetStream));
  const auto chosen = stratified_pick(labels, total, rng);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentParams sample_augment(const AugmentConfig& config, Rng& rng) {
  AugmentParams p;
  if (!config.enabled) return p;
  // Every draw is made even for disabled transforms so that toggling one
  // does not shift the others.
  const double angle = uniform(rng, 0.0, 360.0);
  const bool h = bernoulli(rng, 0.5);
  const bool v = bernoulli(rng, 0.5);
  const double zoom = uniform(rng, config.zoom_min, config.zoom_max);
  if (config.rotate) p.angle_degrees = angle;
  if (config.hflip) p.hflip = h;
  if (config.vflip) p.vflip = v;
  if (config.zoom) p.zoom = zoom;
  return p;
}

void apply_augment(std::span<const float> in, std::span<float> out, std::size_t channels,
                   std::size_t height, std::size_t width, const AugmentParams& params) {
  const std::size_t plane = height * width;
  if (in.size() != channels * plane || out.size() != in.size()) {
    throw DimensionError("apply_augment: buffers do not match C x H x W");
  }
  if (!(params.zoom > 0.0)) throw ConfigError("zoom must be positive");
  const bool geometric = params.angle_degrees != 0.0 || params.zoom != 1.0;
  if (!geometric) {
    std::copy(in.begin(), in.end(), out.begin());
  } else {
    // Output pixel d (relative to the centre) samples the source at
    // R(-angle) d / zoom.
    const double rad = params.angle_degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad) / params.zoom, s = std::sin(rad) / params.zoom;
    const double cx = 0.5 * static_cast<double>(width - 1);
    const double cy = 0.5 * static_cast<double>(height - 1);
    const auto w = static_cast<std::ptrdiff_t>(width), h = static_cast<std::ptrdiff_t>(height);
    for (std::size_t y = 0; y < height; ++y) {
      const double dy = static_cast<double>(y) - cy;
      for (std::size_t x = 0; x < width; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double sx = c * dx + s * dy + cx;
        const double sy = -s * dx + c * dy + cy;
        const double fx = std::floor(sx), fy = std::floor(sy);
        const double ax = sx - fx, ay = sy - fy;
        const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
        const bool in_x0 = x0 >= 0 && x0 < w, in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
        const bool in_y0 = y0 >= 0 && y0 < h, in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const float* src = in.data() + ch * plane;
          auto tap = [&](bool ok, std::ptrdiff_t yy, std::ptrdiff_t xx) -> double {
            return ok ? static_cast<double>(src[yy * w + xx]) : 1.0;
          };
          const double v00 = tap(in_y0 && in_x0, y0, x0);
          const double v01 = tap(in_y0 && in_x1, y0, x0 + 1);
          const double v10 = tap(in_y1 && in_x0, y0 + 1, x0);
          const double v11 = tap(in_y1 && in_x1, y0 + 1, x0 + 1);
          const double top = (1.0 - ax) * v00 + ax * v01;
          const double bottom = (1.0 - ax) * v10 + ax * v11;
          const double v = (1.0 - ay) * top + ay * bottom;
          out[ch * plane + y * width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  if (params.hflip) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t y = 0; y < height; ++y) {
        float* row = out.data() + ch * plane + y * width;
        std::reverse(row, row + width);
      }
    }
  }
  if (params.vflip) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      float* p = out.data() + ch * plane;
      for (std::size_t y = 0; y < height / 2; ++y) {
        std::swap_ranges(p + y * width, p + (y + 1) * width, p + (height - 1 - y) * width);
      }
    }
  }
}

ImageRecord augment(const ImageRecord& image, Rng& rng, const AugmentConfig& config) {
  ImageRecord out = image;
  apply_augment(image.pixels, out.pixels, kChannels, image.height, image.width,
                sample_augment(config, rng));
  return out;
}

Rng augment_rng(std::uint64_t seed, std::size_t epoch, std::uint32_t id) {
  return Rng(derive_seed(derive_seed(seed, kAugmentStream), epoch, id));
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamOptions& o) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), T(0));
      state.v[i].assign(params[i].size(), T(0));
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T lr = static_cast<T>(o.learning_rate), eps = static_cast<T>(o.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.size()) throw DimensionError("adam_step: parameter resized");
    if (!p.has_grad()) {
      // Zero gradient: the moments still decay.
      for (std::size_t j = 0; j < p.size(); ++j) {
        state.m[i][j] *= b1;
        state.v[i][j] *= b2;
      }
    }
    const std::span<const T> g = p.has_grad() ? std::span<const T>(p.grad()) : std::span<const T>();
    auto data = p.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!g.empty()) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      }
      const T m_hat = m[j] / c1;
      const T v_hat = v[j] / c2;
      data[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&, const AdamOptions&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&, const AdamOptions&);

// ---------------------------------------------------------------------------
// Teachers

ModelTeacher::ModelTeacher(const Model& model) : model_(model) {
  if (!model.spec().attention_hook) throw ContractError("teacher model has no attention hook");
}

TeacherOutput ModelTeacher::outputs(std::span<const std::uint32_t>,
                                    const Tensor<float>& batch) const {
  NoGradGuard no_grad;
  const auto result = model_.infer(batch);
  TeacherOutput out;
  out.maps = attention_map(result.attention_source);
  out.logits.assign(result.logits.data().begin(), result.logits.data().end());
  return out;
}

std::pair<std::size_t, std::size_t> ModelTeacher::map_shape() const {
  const auto shapes = model_.layer_shapes();
  const auto& s = shapes.at(*model_.spec().attention_hook);
  return {s.at(1), s.at(2)};
}

RecordTeacher::RecordTeacher(std::vector<AttentionRecord> records) : records_(std::move(records)) {
  if (records_.empty()) throw DataError("teacher file holds no records");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.height != records_[0].height || r.width != records_[0].width ||
        r.values.size() != std::size_t{r.height} * r.width) {
      throw DataError("teacher records have inconsistent map shapes");
    }
    if (!index_.emplace(r.id, i).second) {
      throw DataError("teacher records repeat id " + std::to_string(r.id));
    }
  }
}

RecordTeacher RecordTeacher::from_file(const std::filesystem::path& path) {
  return RecordTeacher(read_attention_file(path));
}

TeacherOutput RecordTeacher::outputs(std::span<const std::uint32_t> ids,
                                     const Tensor<float>&) const {
  const std::size_t plane = std::size_t{records_[0].height} * records_[0].width;
  std::vector<float> maps;
  maps.reserve(ids.size() * plane);
  TeacherOutput out;
  for (auto id : ids) {
    const auto it = index_.find(id);
    if (it == index_.end()) throw DataError("teacher file has no record for id " + std::to_string(id));
    const auto& r = records_[it->second];
    maps.insert(maps.end(), r.values.begin(), r.values.end());
    out.logits.push_back(r.logit);
  }
  out.maps = Tensor<float>(Shape{ids.size(), records_[0].height, records_[0].width},
                           std::move(maps));
  return out;
}

std::pair<std::size_t, std::size_t> RecordTeacher::map_shape() const {
  return {records_[0].height, records_[0].width};
}

void RecordTeacher::check_coverage(std::span<const std::uint32_t> ids) const {
  for (auto id : ids) {
    if (!index_.count(id)) {
      throw DataError("teacher file has no record for id " + std::to_string(id));
    }
  }
}

namespace {

Tensor<float> batch_tensor(const ImageSet& set, std::size_t first, std::size_t count) {
  const std::size_t per = set.sample_size();
  std::vector<float> px(set.pixels.begin() + static_cast<std::ptrdiff_t>(first * per),
                        set.pixels.begin() + static_cast<std::ptrdiff_t>((first + count) * per));
  return Tensor<float>(Shape{count, kChannels, set.height, set.width}, std::move(px));
}

}  // namespace

std::vector<AttentionRecord> compute_teacher_records(const Model& teacher, const ImageSet& set,
                                                     std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  ModelTeacher t(teacher);
  const auto [h, w] = t.map_shape();
  if (h > 0xFFFF || w > 0xFFFF) throw ContractError("attention map too large for ATMAP");
  std::vector<AttentionRecord> records;
  records.reserve(set.size());
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, set.size() - start);
    const auto ids = std::span<const std::uint32_t>(set.ids).subspan(start, count);
    const auto out = t.outputs(ids, batch_tensor(set, start, count));
    const auto maps = out.maps.data();
    for (std::size_t i = 0; i < count; ++i) {
      AttentionRecord r;
      r.id = ids[i];
      r.logit = out.logits[i];
      r.height = static_cast<std::uint16_t>(h);
      r.width = static_cast<std::uint16_t>(w);
      r.values.assign(maps.begin() + static_cast<std::ptrdiff_t>(i * h * w),
                      maps.begin() + static_cast<std::ptrdiff_t>((i + 1) * h * w));
      records.push_back(std::move(r));
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Inference helpers

double probability_of(float logit) { return soften_logit(static_cast<double>(logit), 1.0).p1; }

std::vector<float> predict_logits(const Model& model, const ImageSet& set, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  NoGradGuard no_grad;
  std::vector<float> logits;
  logits.reserve(set.size());
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, set.size() - start);
    const auto result = model.infer(batch_tensor(set, start, count));
    logits.insert(logits.end(), result.logits.data().begin(), result.logits.data().end());
  }
  return logits;
}

std::vector<ScoredSample> score_samples(const Model& model, const ImageSet& set,
                                        std::size_t batch_size) {
  const auto logits = predict_logits(model, set, batch_size);
  std::vector<ScoredSample> out(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    out[i] = {set.ids[i], probability_of(logits[i]), set.labels[i]};
  }
  return out;
}

Evaluation evaluate_model(const Model& model, const ImageSet& set, std::size_t batch_size) {
  if (set.size() == 0) throw ContractError("evaluate_model: empty set");
  const auto samples = score_samples(model, set, batch_size);
  Evaluation e;
  double loss = 0.0;
  for (const auto& s : samples) {
    const double q = std::clamp(s.score, kProbabilityClamp, 1.0 - kProbabilityClamp);
    loss -= s.label == 1 ? std::log(q) : std::log(1.0 - q);
  }
  e.loss = loss / static_cast<double>(samples.size());
  e.report = evaluate_scores(samples);
  return e;
}

// ---------------------------------------------------------------------------
// Training

std::string TrainHistory::to_csv() const {
  std::string out =
      "epoch,train_loss,val_loss,val_accuracy,val_roc_auc,val_pr_auc,seconds,train_at_loss,"
      "rng_digest\n";
  auto real = [](double v) { return std::isnan(v) ? std::string("nan") : real_text(v); };
  char digest[17];
  for (const auto& e : epochs) {
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(e.rng_digest));
    out += std::to_string(e.epoch) + ',' + real(e.train_loss) + ',' + real(e.val_loss) + ',' +
           real(e.val_accuracy) + ',' + real(e.val_roc_auc) + ',' + real(e.val_pr_auc) + ',' +
           real(e.seconds) + ',' + real(e.train_at_loss) + ',' + digest + '\n';
  }
  return out;
}

namespace {

/// Hard or soft per-sample targets for the cross-entropy term.
struct Targets {
  const std::unordered_map<std::uint32_t, double>* soft = nullptr;

  float of(const ImageSet& set, std::size_t i) const {
    if (soft == nullptr) return static_cast<float>(set.labels[i]);
    const auto it = soft->find(set.ids[i]);
    if (it == soft->end()) {
      throw DataError("no soft label for sample " + std::to_string(set.ids[i]));
    }
    return static_cast<float>(it->second);
  }
};

/// Runs fn(i) for i in [0, n), on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_input(const Model& model, const ImageSet& set, const char* what) {
  const Shape expected{kChannels, set.height, set.width};
  if (model.spec().input != expected) {
    throw DimensionError(std::string(what) + " images are " + to_string(expected) +
                         " but the model expects " + to_string(model.spec().input));
  }
  if (set.size() == 0) throw ContractError(std::string(what) + " set is empty");
  check_binary(set.labels);
}

void check_teacher(const Model& student, const Teacher& teacher, const ImageSet& train,
                   const TrainConfig& config) {
  if (!student.spec().attention_hook) throw ContractError("student model has no attention hook");
  const auto shapes = student.layer_shapes();
  const auto& hook = shapes.at(*student.spec().attention_hook);
  const auto [th, tw] = teacher.map_shape();
  if (hook.at(1) != th || hook.at(2) != tw) {
    throw ContractError("teacher attention maps are " + std::to_string(th) + "x" +
                        std::to_string(tw) + " but the student hook is " + std::to_string(hook[1]) +
                        "x" + std::to_string(hook[2]));
  }
  if (config.augment.enabled && !teacher.accepts_augmented_images()) {
    throw ConfigError(
        "a precomputed teacher only covers unaugmented images; disable augmentation");
  }
  teacher.check_coverage(train.ids);
}

TrainResult run_training(Model model, const ImageSet& train, const ImageSet* validation,
                         const TrainConfig& config, const Teacher* teacher, Targets targets,
                         const EpochCallback& on_epoch) {
  detail::FlushDenormals ftz;
  config.validate();
  check_input(model, train, "training");
  if (validation != nullptr) check_input(model, *validation, "validation");
  if (teacher != nullptr) check_teacher(model, *teacher, train, config);

  const bool soft = targets.soft != nullptr;
  const std::size_t workers = config.deterministic ? 1 : config.workers;
  const std::size_t n = train.size();
  const std::size_t per = train.sample_size();
  auto params = model.trainable_tensors();
  AdamState<float> adam;
  std::optional<Model> best;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  TrainHistory history;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
    Rng dropout_rng(derive_seed(config.seed, kDropoutStream, epoch));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), shuffle_rng);
    const AdamOptions adam_options{config.learning_rate_at(epoch), config.adam_beta1,
                                   config.adam_beta2, config.adam_epsilon};

    double loss_sum = 0.0, at_sum = 0.0;
    for (std::size_t start = 0, batch_no = 0; start < n; start += config.batch_size, ++batch_no) {
      const std::size_t count = std::min(config.batch_size, n - start);
      std::vector<float> pixels(count * per);
      std::vector<std::uint32_t> ids(count);
      std::vector<float> y(count);
      for (std::size_t b = 0; b < count; ++b) {
        ids[b] = train.ids[order[start + b]];
        y[b] = targets.of(train, order[start + b]);
      }
      parallel_for(count, workers, [&](std::size_t b) {
        const std::size_t i = order[start + b];
        const std::span<float> dst(pixels.data() + b * per, per);
        if (config.augment.enabled) {
          Rng rng = augment_rng(config.seed, epoch, train.ids[i]);
          apply_augment(train.sample(i), dst, kChannels, train.height, train.width,
                        sample_augment(config.augment, rng));
        } else {
          const auto src = train.sample(i);
          std::copy(src.begin(), src.end(), dst.begin());
        }
      });
      const Tensor<float> x(Shape{count, kChannels, train.height, train.width}, std::move(pixels));

      try {
        const auto result = model.forward(x, Mode::kTrain, &dropout_rng);
        const Tensor<float> probs = activation(result.logits, Activation::kSigmoid);
        Tensor<float> at_term;
        if (teacher != nullptr) {
          const auto t = teacher->outputs(ids, x);
          at_term = at_loss(t.maps, attention_map(result.attention_source), config.at_epsilon,
                            config.at_reduction);
          at_sum += static_cast<double>(at_term.item()) * static_cast<double>(count);
        }
        Tensor<float> loss;
        if (soft) {
          loss = combined_loss(probs, std::span<const float>(y), at_term, config.weights);
        } else {
          loss = binary_cross_entropy(probs, std::span<const float>(y), kProbabilityClamp);
          if (at_term.defined()) {
            loss = add(loss, scale(at_term, static_cast<float>(1.0 / config.weights.beta2)));
          }
        }
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(count);
        for (auto& p : params) p.zero_grad();
        backward(loss);
        adam_step(std::span<Tensor<float>>(params), adam, adam_options);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no + 1) + ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(rec.train_loss)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite training loss");
    }
    rec.train_at_loss = teacher != nullptr ? at_sum / static_cast<double>(n) : kNaN;
    if (validation != nullptr) {
      const auto ev = evaluate_model(model, *validation, config.batch_size);
      rec.val_loss = ev.loss;
      rec.val_accuracy = ev.report.accuracy;
      rec.val_roc_auc = ev.report.roc_auc;
      rec.val_pr_auc = ev.report.pr_auc;
    } else {
      rec.val_loss = rec.val_accuracy = rec.val_roc_auc = rec.val_pr_auc = kNaN;
    }
    rec.rng_digest = shuffle_rng();
    rec.seconds = config.deterministic
                      ? 0.0
                      : std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                            .count();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (config.early_stopping && validation != nullptr) {
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        best = model.clone();
        history.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        history.stopped_early = true;
        break;
      }
    }
  }
  if (best) {
    model = std::move(*best);
  } else {
    history.best_epoch = history.epochs.size();
  }
  return {std::move(model), std::move(history)};
}

}  // namespace

TrainResult train_baseline(Model model, const ImageSet& train, const ImageSet* validation,
                           const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(std::move(model), train, validation, config, nullptr, {}, on_epoch);
}

TrainResult train_at(Model student, const Teacher& teacher, const ImageSet& train,
                     const ImageSet* validation, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  return run_training(std::move(student), train, validation, config, &teacher, {}, on_epoch);
}

TrainResult train_with_soft_labels(Model student, const Teacher& teacher, const ImageSet& train,
                                   std::span<const SoftLabelRecord> soft_labels,
                                   const ImageSet* validation, const TrainConfig& config,
                                   const EpochCallback& on_epoch) {
  std::unordered_map<std::uint32_t, double> soft;
  for (const auto& r : soft_labels) soft[r.id] = r.p1;
  Targets targets{&soft};
  return run_training(std::move(student), train, validation, config, &teacher, targets, on_epoch);
}

std::uint64_t student_seed(std::uint64_t run_seed, int student) {
  return derive_seed(run_seed, kStudentStream, static_cast<std::uint64_t>(student));
}

LsrResult train_at_lsr(const Teacher& teacher, const ImageSet& train, const ImageSet* validation,
                       const TrainConfig& config, const EpochCallback& on_epoch1,
                       const EpochCallback& on_epoch2) {
  config.validate();
  auto subset_indices = stratified_subset(train.labels, config.subset_fraction, config.seed);
  const ImageSet subset = train.subset(subset_indices);

  TrainConfig c1 = config;
  c1.seed = student_seed(config.seed, 1);
  auto student1 = train_at(build_lighter_cnn(config.profile, c1.seed), teacher, subset,
                           validation, c1, on_epoch1);

  auto soft_labels = generate_soft_labels(student1.model, train.ids, train.labels, train.pixels,
                                          config.weights.temperature, config.lsr_replacement,
                                          config.batch_size);

  TrainConfig c2 = config;
  c2.seed = student_seed(config.seed, 2);
  auto student2 = train_with_soft_labels(build_lighter_cnn(config.profile, c2.seed), teacher,
                                         train, soft_labels, validation, c2, on_epoch2);
  return LsrResult{std::move(student1), std::move(student2), std::move(subset_indices),
                   std::move(soft_labels)};
}

}  // namespace kdlite
