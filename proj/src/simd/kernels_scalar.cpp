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

#include "kdlite/simd/kernels.hpp"

namespace kdlite::simd {
namespace {

template <typename T>
void gemm_ref(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
              std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
              std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const T av = alpha * (trans_a == Trans::kNo ? a[i * lda + p] : a[p * lda + i]);
      if (av == T(0)) continue;
      if (trans_b == Trans::kNo) {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
}

template <typename T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T dot_ref(std::size_t n, const T* x, const T* y) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
T sum_ref(std::size_t n, const T* x) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
void leaky_relu_ref(std::size_t n, T slope, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_relu_backward_ref(std::size_t n, T slope, const T* x, const T* dy,
                             T* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += x[i] >= T(0) ? dy[i] : slope * dy[i];
}

template <typename T>
KernelTable<T> make_scalar_table() {
  KernelTable<T> t;
  t.level = Level::kScalar;
  t.gemm = &gemm_ref<T>;
  t.axpy = &axpy_ref<T>;
  t.dot = &dot_ref<T>;
  t.sum = &sum_ref<T>;
  t.leaky_relu = &leaky_relu_ref<T>;
  t.leaky_relu_backward = &leaky_relu_backward_ref<T>;
  return t;
}

}  // namespace

template <typename T>
const KernelTable<T>& scalar_kernels() noexcept {
  static const KernelTable<T> table = make_scalar_table<T>();
  return table;
}

template const KernelTable<float>& scalar_kernels<float>() noexcept;
template const KernelTable<double>& scalar_kernels<double>() noexcept;

}  // namespace kdlite::simd
