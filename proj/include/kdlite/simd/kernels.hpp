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

// Hot inner loops of the tensor engine. Each kernel has a portable scalar
// reference implementation and, where the target supports it, an AVX2+FMA
// variant. The active table is chosen once at startup from CPUID and can be
// forced with the KDLITE_SIMD environment variable ("scalar" or "avx2") or
// with set_simd_level().

#include <cstddef>
#include <string_view>

namespace kdlite::simd {

enum class Level { kScalar, kAvx2 };

enum class Trans { kNo, kYes };

std::string_view level_name(Level level) noexcept;

/// C = alpha * op(A) * op(B) + beta * C, row-major.
/// op(A) is m x k, op(B) is k x n. When beta == 0, C is not read.
template <typename T>
using GemmFn = void (*)(Trans trans_a, Trans trans_b, std::size_t m,
                        std::size_t n, std::size_t k, T alpha, const T* a,
                        std::size_t lda, const T* b, std::size_t ldb, T beta,
                        T* c, std::size_t ldc);

template <typename T>
struct KernelTable {
  Level level = Level::kScalar;
  GemmFn<T> gemm = nullptr;
  /// y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y) = nullptr;
  T (*dot)(std::size_t n, const T* x, const T* y) = nullptr;
  T (*sum)(std::size_t n, const T* x) = nullptr;
  /// y = x >= 0 ? x : slope * x (slope 0 gives relu)
  void (*leaky_relu)(std::size_t n, T slope, const T* x, T* y) = nullptr;
  /// dx += dy * (x >= 0 ? 1 : slope), x is the forward input
  void (*leaky_relu_backward)(std::size_t n, T slope, const T* x,
                              const T* dy, T* dx) = nullptr;
};

/// Scalar reference kernels; always available.
template <typename T>
const KernelTable<T>& scalar_kernels() noexcept;

/// AVX2 kernels, or nullptr when not compiled in or not supported by the CPU.
const KernelTable<float>* avx2_kernels_f32() noexcept;
const KernelTable<double>* avx2_kernels_f64() noexcept;

bool cpu_supports(Level level) noexcept;

/// Best level supported by this CPU, honoring KDLITE_SIMD.
Level detect_level() noexcept;

Level active_level() noexcept;

/// Force a dispatch level. Returns false (and keeps the current level)
/// when the CPU or the build cannot run it.
bool set_level(Level level) noexcept;

/// Currently dispatched kernels for T.
template <typename T>
const KernelTable<T>& kernels() noexcept;

}  // namespace kdlite::simd
