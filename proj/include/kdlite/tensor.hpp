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

// Dense row-major tensors with a dynamic reverse-mode graph.
//
// A Tensor is a cheap handle to a shared node. Operators in ops.hpp create a
// new node and, when any input requires a gradient and grad mode is on,
// attach an OpRecord holding the inputs and a backward closure. backward()
// walks the records reachable from a scalar loss in reverse topological
// order. Leaf gradients accumulate across calls; interior gradients are
// rebuilt on every call.
//
// The element type is the engine precision: float for training, double for
// gradient checks. Both are explicitly instantiated in tensor.cpp/ops.cpp.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kdlite {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

enum class Mode { kTrain, kEval };

template <typename T>
struct OpRecord;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first backward reaches the node
  bool requires_grad = false;
  std::shared_ptr<OpRecord<T>> producer;  // null for leaves

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

template <typename T>
struct OpRecord {
  std::string name;
  std::vector<std::shared_ptr<TensorNode<T>>> inputs;
  // Reads the output node's grad and accumulates into the inputs' grads.
  // Inputs that do not require a gradient must be skipped.
  std::function<void(const TensorNode<T>& out)> backward;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }
  static Tensor from_node(std::shared_ptr<TensorNode<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& values() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  /// Value of a one-element tensor.
  T item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zeros when no backward has reached this tensor.
  std::span<T> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  bool is_leaf() const { return node_->producer == nullptr; }

  /// New leaf sharing nothing with this tensor.
  Tensor clone() const;
  /// New leaf with a copy of the values and no gradient tracking.
  Tensor detach() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled() noexcept;

/// The op records reachable from a root, in topological order (producers
/// before consumers).
template <typename T>
class Graph {
 public:
  static Graph collect(const Tensor<T>& root);

  const std::vector<TensorNode<T>*>& nodes() const { return nodes_; }
  std::size_t op_count() const;

 private:
  std::vector<TensorNode<T>*> nodes_;
};

/// Populate gradients of every requires_grad tensor reachable from loss.
/// Throws ContractError when loss is not a one-element tensor.
template <typename T>
void backward(const Tensor<T>& loss);

/// Throws NumericError naming `op` when any value is NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, const std::string& op);

}  // namespace kdlite
