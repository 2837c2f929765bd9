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

#include "kdlite/gradient_suite.hpp"

#include <algorithm>
#include <cmath>

#include "kdlite/distillation.hpp"
#include "kdlite/ops.hpp"
#include "kdlite/random.hpp"

namespace kdlite {

namespace {

using D = Tensor<double>;

/// N(0, 1) values with |v| >= margin, so no kink lies within a finite
/// difference step of any coordinate.
D normal(const Shape& shape, Rng& rng, double margin = 0.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) {
    do {
      x = standard_normal(rng);
    } while (std::abs(x) < margin);
  }
  return D(shape, std::move(v));
}

D uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return D(shape, std::move(v));
}

/// sum(out * r) for a fixed random r: every output coordinate gets its own
/// upstream gradient.
D probe(const D& out, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x70726f6265));
  return sum(mul(out, normal(out.shape(), rng)));
}

using Builder = std::function<D(const D&)>;

/// Case over argument `which` of an operator whose inputs are drawn by
/// `make`; `apply` maps the full argument list to the operator output.
GradientCase unary(std::string name, std::function<D(Rng&)> make_input,
                   std::function<D(const D&, std::uint64_t)> apply) {
  return {std::move(name), [make_input, apply](std::uint64_t seed, const GradCheckOptions& o) {
            Rng rng(seed);
            const D x = make_input(rng);
            return finite_difference_check(
                [&](const D& p) { return probe(apply(p, seed), seed); }, x, o);
          }};
}

/// Checks argument `which` of a multi-input operator; the others are held fixed.
GradientCase multi(std::string name, std::size_t which,
                   std::function<std::vector<D>(Rng&)> make_inputs,
                   std::function<D(const std::vector<D>&, std::uint64_t)> apply) {
  return {std::move(name),
          [which, make_inputs, apply](std::uint64_t seed, const GradCheckOptions& o) {
            Rng rng(seed);
            std::vector<D> inputs = make_inputs(rng);
            const D point = inputs[which];
            return finite_difference_check(
                [&](const D& p) {
                  auto args = inputs;
                  args[which] = p;
                  return probe(apply(args, seed), seed);
                },
                point, o);
          }};
}

std::vector<D> conv_inputs(Rng& rng) {
  return {normal({2, 2, 7, 7}, rng), normal({3, 2, 3, 3}, rng), normal({3}, rng)};
}

std::vector<D> bn_inputs(Rng& rng) {
  return {normal({3, 2, 3, 3}, rng), uniform_tensor({2}, rng, 0.5, 1.5), normal({2}, rng)};
}

D bn_apply(const std::vector<D>& a, Mode mode, std::uint64_t seed) {
  BatchNormStats<double> stats(a[1].size());
  if (mode == Mode::kEval) {
    Rng rng(derive_seed(seed, 0x7374617473));
    stats.running_mean = normal({a[1].size()}, rng);
    stats.running_var = uniform_tensor({a[1].size()}, rng, 0.5, 2.0);
  }
  return batchnorm(a[0], a[1], a[2], stats, mode);
}

std::vector<D> dense_inputs(Rng& rng) {
  return {normal({3, 4}, rng), normal({4, 5}, rng), normal({5}, rng)};
}

std::vector<D> pair_inputs(Rng& rng) { return {normal({3, 4}, rng), normal({3, 4}, rng)}; }

// ---------------------------------------------------------------------------
// Composite: x -> conv -> batchnorm(train) -> leaky relu -> [attention hook]
// -> avgpool -> flatten -> dense -> sigmoid -> combined loss with AT.

struct Composite {
  D x, conv_w, conv_b, gamma, beta, fc_w, fc_b, teacher_map;
  std::vector<double> soft_targets;
};

D composite_forward(const Composite& c, D* bn_out = nullptr) {
  BatchNormStats<double> stats(c.gamma.size());
  const D z = conv2d(c.x, c.conv_w, c.conv_b, 1);
  const D n = batchnorm(z, c.gamma, c.beta, stats, Mode::kTrain);
  if (bn_out != nullptr) *bn_out = n;
  const D a = activation(n, Activation::kLeakyRelu);
  const D q = attention_map(a);
  const D pooled = avgpool2d(a, 2, 2);
  const D logits = dense(flatten(pooled), c.fc_w, c.fc_b);
  const D probs = activation(logits, Activation::kSigmoid);
  const D at = at_loss(c.teacher_map, q);
  return combined_loss(probs, std::span<const double>(c.soft_targets), at, LossWeights{});
}

Composite make_composite(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x636f6d70));
  for (;;) {
    Composite c;
    c.x = normal({2, 2, 6, 6}, rng);
    c.conv_w = normal({4, 2, 3, 3}, rng);
    c.conv_b = normal({4}, rng);
    c.gamma = uniform_tensor({4}, rng, 0.5, 1.5);
    c.beta = normal({4}, rng);
    c.fc_w = normal({16, 1}, rng);
    c.fc_b = normal({1}, rng);
    c.teacher_map = uniform_tensor({2, 4, 4}, rng, 0.1, 2.0);
    c.soft_targets = {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
    // Reject draws with a batch-norm output near the leaky-relu / |.| kink.
    D n;
    {
      NoGradGuard no_grad;
      composite_forward(c, &n);
    }
    double closest = INFINITY;
    for (double v : n.data()) closest = std::min(closest, std::abs(v));
    if (closest > 1e-3) return c;
  }
}

GradientCase composite_case(std::string name, D Composite::*member) {
  return {std::move(name), [member](std::uint64_t seed, const GradCheckOptions& o) {
            const Composite base = make_composite(seed);
            return finite_difference_check(
                [&](const D& p) {
                  Composite c = base;
                  c.*member = p;
                  return composite_forward(c);
                },
                base.*member, o);
          }};
}

std::vector<GradientCase> build_cases() {
  std::vector<GradientCase> cases;
  auto conv = [](std::size_t stride) {
    return [stride](const std::vector<D>& a, std::uint64_t) {
      return conv2d(a[0], a[1], a[2], stride);
    };
  };
  cases.push_back(multi("conv2d.input", 0, conv_inputs, conv(1)));
  cases.push_back(multi("conv2d.weight", 1, conv_inputs, conv(1)));
  cases.push_back(multi("conv2d.bias", 2, conv_inputs, conv(1)));
  cases.push_back(multi("conv2d_stride2.input", 0, conv_inputs, conv(2)));
  cases.push_back(multi("conv2d_stride2.weight", 1, conv_inputs, conv(2)));

  cases.push_back(unary("avgpool2d.input", [](Rng& r) { return normal({2, 2, 6, 6}, r); },
                        [](const D& x, std::uint64_t) { return avgpool2d(x, 2, 2); }));
  cases.push_back(unary("avgpool2d_overlap.input", [](Rng& r) { return normal({1, 2, 7, 7}, r); },
                        [](const D& x, std::uint64_t) { return avgpool2d(x, 3, 2); }));

  auto bn_train = [](const std::vector<D>& a, std::uint64_t s) { return bn_apply(a, Mode::kTrain, s); };
  auto bn_eval = [](const std::vector<D>& a, std::uint64_t s) { return bn_apply(a, Mode::kEval, s); };
  cases.push_back(multi("batchnorm_train.input", 0, bn_inputs, bn_train));
  cases.push_back(multi("batchnorm_train.gamma", 1, bn_inputs, bn_train));
  cases.push_back(multi("batchnorm_train.beta", 2, bn_inputs, bn_train));
  cases.push_back(multi("batchnorm_eval.input", 0, bn_inputs, bn_eval));
  cases.push_back(multi("batchnorm_eval.gamma", 1, bn_inputs, bn_eval));
  cases.push_back(multi("batchnorm_eval.beta", 2, bn_inputs, bn_eval));

  for (auto kind : {Activation::kNone, Activation::kRelu, Activation::kLeakyRelu,
                    Activation::kSigmoid}) {
    cases.push_back(unary("activation_" + std::string(activation_name(kind)) + ".input",
                          [](Rng& r) { return normal({3, 5}, r, 0.05); },
                          [kind](const D& x, std::uint64_t) { return activation(x, kind); }));
  }

  auto dense_apply = [](const std::vector<D>& a, std::uint64_t) { return dense(a[0], a[1], a[2]); };
  cases.push_back(multi("dense.input", 0, dense_inputs, dense_apply));
  cases.push_back(multi("dense.weight", 1, dense_inputs, dense_apply));
  cases.push_back(multi("dense.bias", 2, dense_inputs, dense_apply));

  cases.push_back(unary("dropout_train.input", [](Rng& r) { return normal({4, 6}, r); },
                        [](const D& x, std::uint64_t seed) {
                          Rng mask(derive_seed(seed, 0x6d61736b));
                          return dropout(x, 0.25, Mode::kTrain, mask);
                        }));
  cases.push_back(unary("flatten.input", [](Rng& r) { return normal({2, 3, 2, 2}, r); },
                        [](const D& x, std::uint64_t) { return flatten(x); }));
  cases.push_back(unary("reshape.input", [](Rng& r) { return normal({2, 6}, r); },
                        [](const D& x, std::uint64_t) { return reshape(x, Shape{3, 4}); }));

  auto binary = [&](const std::string& op, std::function<D(const D&, const D&)> fn) {
    auto apply = [fn](const std::vector<D>& a, std::uint64_t) { return fn(a[0], a[1]); };
    cases.push_back(multi(op + ".a", 0, pair_inputs, apply));
    cases.push_back(multi(op + ".b", 1, pair_inputs, apply));
  };
  binary("add", [](const D& a, const D& b) { return add(a, b); });
  binary("sub", [](const D& a, const D& b) { return sub(a, b); });
  binary("mul", [](const D& a, const D& b) { return mul(a, b); });
  cases.push_back(unary("scale.input", [](Rng& r) { return normal({3, 4}, r); },
                        [](const D& x, std::uint64_t) { return scale(x, -1.75); }));
  cases.push_back(unary("square.input", [](Rng& r) { return normal({3, 4}, r); },
                        [](const D& x, std::uint64_t) { return square(x); }));
  cases.push_back(unary("sum.input", [](Rng& r) { return normal({3, 4}, r); },
                        [](const D& x, std::uint64_t) { return sum(x); }));
  cases.push_back(unary("mean.input", [](Rng& r) { return normal({3, 4}, r); },
                        [](const D& x, std::uint64_t) { return mean(x); }));

  cases.push_back(unary("binary_cross_entropy.probs",
                        [](Rng& r) { return uniform_tensor({6, 1}, r, 0.05, 0.95); },
                        [](const D& q, std::uint64_t seed) {
                          Rng rng(derive_seed(seed, 0x74617267));
                          std::vector<double> p(q.size());
                          for (auto& v : p) v = uniform01(rng);
                          return binary_cross_entropy(q, std::span<const double>(p));
                        }));
  cases.push_back(unary("attention_map.input", [](Rng& r) { return normal({2, 3, 4, 4}, r, 0.05); },
                        [](const D& a, std::uint64_t) { return attention_map(a); }));
  cases.push_back(unary("at_loss.student", [](Rng& r) { return uniform_tensor({3, 4, 5}, r, 0.1, 2.0); },
                        [](const D& qs, std::uint64_t seed) {
                          Rng rng(derive_seed(seed, 0x7465616368));
                          return at_loss(uniform_tensor({3, 4, 5}, rng, 0.1, 2.0), qs);
                        }));
  cases.push_back(unary("combined_loss.probs",
                        [](Rng& r) { return uniform_tensor({4, 1}, r, 0.05, 0.95); },
                        [](const D& q, std::uint64_t seed) {
                          Rng rng(derive_seed(seed, 0x736f6674));
                          std::vector<double> p(q.size());
                          for (auto& v : p) v = uniform(rng, 0.05, 0.95);
                          const D at = D::scalar(0.3);
                          return combined_loss(q, std::span<const double>(p), at, LossWeights{});
                        }));

  cases.push_back(composite_case("composite.input", &Composite::x));
  cases.push_back(composite_case("composite.conv_weight", &Composite::conv_w));
  cases.push_back(composite_case("composite.gamma", &Composite::gamma));
  cases.push_back(composite_case("composite.dense_weight", &Composite::fc_w));
  return cases;
}

}  // namespace

const std::vector<GradientCase>& gradient_cases() {
  static const std::vector<GradientCase> cases = build_cases();
  return cases;
}

std::vector<GradientResult> run_gradient_suite(std::span<const std::uint64_t> seeds,
                                               const GradCheckOptions& options,
                                               const std::string& filter) {
  std::vector<GradientResult> out;
  for (const auto& c : gradient_cases()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    for (auto seed : seeds) {
      GradCheckOptions o = options;
      o.seed = seed;
      out.push_back({c.name, seed, c.run(seed, o)});
    }
  }
  return out;
}

}  // namespace kdlite
