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

#include "kdlite/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "kdlite/errors.hpp"

namespace kdlite {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<TensorNode<T>>()) {
  node_->data.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (values.size() != numel(shape)) {
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(shape()));
  }
  return node_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(node_->shape, node_->data);
  out.node_->requires_grad = node_->requires_grad && is_leaf();
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() noexcept { return g_grad_enabled; }

template <typename T>
Graph<T> Graph<T>::collect(const Tensor<T>& root) {
  Graph g;
  if (!root.defined()) return g;
  // Iterative post-order DFS; recursion depth would otherwise follow the
  // network depth times the number of elementwise ops.
  std::unordered_set<const TensorNode<T>*> seen;
  struct Frame {
    TensorNode<T>* node;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& producer = top.node->producer;
    if (producer && top.next_input < producer->inputs.size()) {
      TensorNode<T>* child = producer->inputs[top.next_input++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.push_back({child, 0});
      }
      continue;
    }
    g.nodes_.push_back(top.node);
    stack.pop_back();
  }
  return g;
}

template <typename T>
std::size_t Graph<T>::op_count() const {
  std::size_t n = 0;
  for (const auto* node : nodes_) n += node->producer != nullptr;
  return n;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) return;
  const Graph<T> graph = Graph<T>::collect(loss);
  for (auto* node : graph.nodes()) {
    if (node->producer) node->grad.assign(node->data.size(), T(0));
  }
  TensorNode<T>& root = *loss.node();
  root.ensure_grad();
  if (root.producer) {
    root.grad[0] = T(1);
  } else {
    root.grad[0] += T(1);
  }
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    TensorNode<T>* node = *it;
    if (!node->producer) continue;
    for (auto& input : node->producer->inputs) {
      if (input->requires_grad) input->ensure_grad();
    }
    node->producer->backward(*node);
  }
}

template <typename T>
void check_finite(std::span<const T> values, const std::string& op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite value produced by " + op + " at element " +
                         std::to_string(i));
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);
template void check_finite<float>(std::span<const float>, const std::string&);
template void check_finite<double>(std::span<const double>, const std::string&);

}  // namespace kdlite
