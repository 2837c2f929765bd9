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

// Shared plumbing for operator implementations. Not installed.

#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "kdlite/tensor.hpp"

namespace kdlite::detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_mode_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Wraps freshly computed values into a tensor, checks them, and attaches the
// backward rule when some input is differentiable.
template <typename T, typename Backward>
Tensor<T> finish(const char* name, Shape shape, std::vector<T> values,
                 std::initializer_list<const Tensor<T>*> inputs,
                 Backward&& backward_rule) {
  check_finite<T>(values, name);
  Tensor<T> out(std::move(shape), std::move(values));
  if (any_requires_grad<T>(inputs)) {
    auto record = std::make_shared<OpRecord<T>>();
    record->name = name;
    for (const auto* t : inputs) record->inputs.push_back(t->node());
    record->backward = std::forward<Backward>(backward_rule);
    out.node()->producer = std::move(record);
    out.node()->requires_grad = true;
  }
  return out;
}

}  // namespace kdlite::detail
