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

#include <gtest/gtest.h>

#include <cmath>

#include "kdlite/distillation.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/ops.hpp"

namespace kdlite {
namespace {

using D = Tensor<double>;

D map2(std::vector<double> v) { return D(Shape{2, 2}, std::move(v)); }

D random_map(Rng& rng, const Shape& shape, double zero_fraction = 0.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = bernoulli(rng, zero_fraction) ? 0.0 : uniform(rng, 0.0, 5.0);
  return D(shape, v);
}

TEST(AttentionMap, ChannelAbsoluteSum) {
  const D a(Shape{2, 2, 2}, std::vector<double>{1, -2, 3, 0, -1, 1, 0, 2});
  EXPECT_EQ(attention_map(a).values(), (std::vector<double>{2, 3, 3, 2}));
}

TEST(AttentionMap, ZeroAndSingleChannel) {
  const D zero = attention_map(D(Shape{3, 2, 2}, 0.0));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
  const D one(Shape{1, 2, 2}, std::vector<double>{-1.5, 2, 0, -3});
  EXPECT_EQ(attention_map(one).values(), (std::vector<double>{1.5, 2, 0, 3}));
}

TEST(AttentionMap, BatchedAndHomogeneous) {
  Rng rng(3);
  std::vector<double> v(2 * 3 * 4 * 4);
  for (auto& x : v) x = standard_normal(rng);
  const D a(Shape{2, 3, 4, 4}, v);
  const D q = attention_map(a);
  EXPECT_EQ(q.shape(), (Shape{2, 4, 4}));
  const D q2 = attention_map(scale(a, -2.5));
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_GE(q.data()[i], 0.0);
    EXPECT_NEAR(q2.data()[i], 2.5 * q.data()[i], 1e-12);
  }
}

TEST(AtLoss, OrthogonalUnitMaps) {
  EXPECT_NEAR(at_loss(map2({1, 0, 0, 0}), map2({0, 1, 0, 0})).item(), std::sqrt(2.0), 1e-9);
}

TEST(AtLoss, ScaleInvariance) {
  const D q = map2({0.5, 1.5, 2.0, 0.25});
  for (double c : {0.1, 1.0, 1000.0}) {
    EXPECT_LT(at_loss(q, scale(q, c)).item(), 1e-9) << c;
    EXPECT_LT(at_loss(scale(q, c), q).item(), 1e-9) << c;
  }
}

TEST(AtLoss, BoundedAndSymmetric) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const D a = random_map(rng, {3, 3}, 0.3), b = random_map(rng, {3, 3}, 0.3);
    const double l = at_loss(a, b).item();
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, std::sqrt(2.0) + 1e-9);
    EXPECT_NEAR(l, at_loss(b, a).item(), 1e-12);
  }
}

TEST(AtLoss, ZeroMapsNormalizeToZero) {
  EXPECT_EQ(at_loss(map2({0, 0, 0, 0}), map2({0, 0, 0, 0})).item(), 0.0);
  EXPECT_NEAR(at_loss(map2({0, 0, 0, 0}), map2({3, 0, 0, 4})).item(), 1.0, 1e-12);
}

TEST(AtLoss, BatchReductions) {
  const D t(Shape{2, 2, 2}, std::vector<double>{1, 0, 0, 0, 1, 1, 1, 1});
  const D s(Shape{2, 2, 2}, std::vector<double>{0, 1, 0, 0, 2, 2, 2, 2});
  const double first = std::sqrt(2.0);
  EXPECT_NEAR(at_loss(t, s).item(), first / 2.0, 1e-12);
  EXPECT_NEAR(at_loss(t, s, kDefaultAtEpsilon, AtReduction::kSum).item(), first, 1e-12);
}

TEST(AtLoss, ResolutionMismatchIsAContractError) {
  EXPECT_THROW(at_loss(D(Shape{2, 2}, 1.0), D(Shape{3, 3}, 1.0)), ContractError);
}

TEST(AtLoss, TeacherReceivesNoGradient) {
  D t = map2({1, 2, 3, 4}), s = map2({4, 3, 2, 1});
  t.set_requires_grad();
  s.set_requires_grad();
  backward(at_loss(t, s));
  for (double g : t.grad()) EXPECT_EQ(g, 0.0);
  double norm = 0;
  for (double g : s.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(SoftenLogit, Values) {
  const auto half = soften_logit(0.0, 3.0);
  EXPECT_EQ(half.p0, 0.5);
  EXPECT_EQ(half.p1, 0.5);
  EXPECT_NEAR(soften_logit(5.0, 5.0).p1, 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(soften_logit(5.0, 5.0).p1, 0.73106, 1e-5);
  EXPECT_LT(std::abs(soften_logit(5.0, 5.0).p1 - 0.5), std::abs(soften_logit(5.0, 1.0).p1 - 0.5));
  const auto extreme = soften_logit(-800.0, 1.0);
  EXPECT_EQ(extreme.p0 + extreme.p1, 1.0);
}

TEST(SoftLabel, CorrectPredictionIsSoftened) {
  const auto r = make_soft_label(4, 1, 5.0, 5.0);
  EXPECT_NEAR(r.p0, 0.26894, 1e-5);
  EXPECT_NEAR(r.p1, 0.73106, 1e-5);
  EXPECT_EQ(r.origin, SoftLabelOrigin::kSoftened);
  EXPECT_EQ(r.id, 4u);
}

TEST(SoftLabel, MistakeIsReplaced) {
  const auto r = make_soft_label(1, 1, -3.0, 5.0);
  EXPECT_EQ(r.p1, 0.6);
  EXPECT_EQ(r.p0, 1.0 - 0.6);
  EXPECT_EQ(r.origin, SoftLabelOrigin::kReplaced);
  const auto neg = make_soft_label(2, 0, 2.0, 5.0);
  EXPECT_EQ(neg.p0, 0.6);
  EXPECT_EQ(neg.origin, SoftLabelOrigin::kReplaced);
  // sigma(0) = 0.5 counts as a positive prediction.
  EXPECT_EQ(make_soft_label(3, 1, 0.0, 5.0).origin, SoftLabelOrigin::kSoftened);
  EXPECT_EQ(make_soft_label(3, 0, 0.0, 5.0).origin, SoftLabelOrigin::kReplaced);
}

TEST(SoftLabel, GenerateContract) {
  Rng rng(9);
  std::vector<LabeledLogit> samples;
  for (std::uint32_t i = 0; i < 500; ++i)
    samples.push_back({i, static_cast<int>(i % 2), 4.0 * standard_normal(rng)});
  const auto labels = generate_soft_labels(samples, 5.0);
  ASSERT_EQ(labels.size(), samples.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(labels[i].p0 + labels[i].p1, 1.0);
    const bool wrong = (samples[i].logit >= 0.0) != (samples[i].label == 1);
    EXPECT_EQ(labels[i].origin == SoftLabelOrigin::kReplaced, wrong);
  }
  EXPECT_THROW(generate_soft_labels(std::span<const LabeledLogit>{}, 5.0), ContractError);
  EXPECT_THROW(generate_soft_labels(samples, 0.0), ConfigError);
  EXPECT_THROW(generate_soft_labels(samples, 5.0, 0.5), ConfigError);
}

TEST(SoftLabel, OriginNames) {
  for (auto o : {SoftLabelOrigin::kSoftened, SoftLabelOrigin::kReplaced})
    EXPECT_EQ(parse_origin(origin_name(o)), o);
  EXPECT_THROW(parse_origin("guessed"), DataError);
}

TEST(CombinedLoss, UniformTargets) {
  EXPECT_NEAR(combined_loss_value({0.5, 0.5}, {0.5, 0.5}, 0.0, LossWeights{}), std::log(2.0), 1e-15);
}

TEST(CombinedLoss, WeightedSum) {
  const double q1 = std::exp(-0.7);
  EXPECT_NEAR(combined_loss_value({0.0, 1.0}, {1.0 - q1, q1}, 0.4, LossWeights{}), 0.9, 1e-12);
}

TEST(CombinedLoss, CrossEntropyMinimizedAtTarget) {
  const SoftProbabilities p{0.3, 0.7};
  const double entropy = -(0.3 * std::log(0.3) + 0.7 * std::log(0.7));
  EXPECT_NEAR(combined_loss_value(p, p, 0.0, LossWeights{}), entropy, 1e-15);
  for (double q1 : {0.1, 0.5, 0.69, 0.71, 0.99})
    EXPECT_GT(combined_loss_value(p, {1 - q1, q1}, 0.0, LossWeights{}), entropy);
}

TEST(CombinedLoss, TensorFormMatchesScalarForm) {
  const D probs(Shape{2, 1}, std::vector<double>{0.8, 0.3});
  const std::vector<double> targets{0.6, 0.2};
  const D at = D::scalar(0.5);
  LossWeights w{1.5, 2.0, 5.0};
  const double expected = 0.5 * (combined_loss_value({0.4, 0.6}, {0.2, 0.8}, 0.5, w) +
                                 combined_loss_value({0.8, 0.2}, {0.7, 0.3}, 0.5, w));
  EXPECT_NEAR(combined_loss(probs, std::span<const double>(targets), at, w).item(), expected, 1e-12);
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_THROW((LossWeights{0.0, 2.0, 5.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1.0, -2.0, 5.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1.0, 2.0, 0.0}.validate()), ConfigError);
  EXPECT_NO_THROW((LossWeights{1.0, INFINITY, 5.0}.validate()));
}

}  // namespace
}  // namespace kdlite
