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

// Compiled with -mavx2 -mfma. Nothing in here may run before
// cpu_supports(Level::kAvx2) has been checked by the dispatcher.

#include "kdlite/simd/kernels.hpp"

#if defined(KDLITE_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace kdlite::simd {
namespace {

// Register blocking: a 6 x 16 float tile is 12 ymm accumulators, the
// 6 x 8 double tile likewise.
template <typename T>
struct Blocking;

template <>
struct Blocking<float> {
  static constexpr std::size_t kMr = 6;
  static constexpr std::size_t kNr = 16;
  static constexpr std::size_t kMc = 120;
  static constexpr std::size_t kKc = 256;
  static constexpr std::size_t kNc = 3072;
};

template <>
struct Blocking<double> {
  static constexpr std::size_t kMr = 6;
  static constexpr std::size_t kNr = 8;
  static constexpr std::size_t kMc = 96;
  static constexpr std::size_t kKc = 256;
  static constexpr std::size_t kNc = 2048;
};

template <typename T>
void pack_a(Trans trans, const T* a, std::size_t lda, std::size_t i0,
            std::size_t mc, std::size_t p0, std::size_t kc, T* out) {
  constexpr std::size_t mr = Blocking<T>::kMr;
  for (std::size_t ib = 0; ib < mc; ib += mr) {
    const std::size_t rows = std::min(mr, mc - ib);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = i0 + ib + r;
        const std::size_t q = p0 + p;
        out[r] = trans == Trans::kNo ? a[i * lda + q] : a[q * lda + i];
      }
      for (std::size_t r = rows; r < mr; ++r) out[r] = T(0);
      out += mr;
    }
  }
}

template <typename T>
void pack_b(Trans trans, const T* b, std::size_t ldb, std::size_t p0,
            std::size_t kc, std::size_t j0, std::size_t nc, T* out) {
  constexpr std::size_t nr = Blocking<T>::kNr;
  for (std::size_t jb = 0; jb < nc; jb += nr) {
    const std::size_t cols = std::min(nr, nc - jb);
    for (std::size_t p = 0; p < kc; ++p) {
      const std::size_t q = p0 + p;
      if (trans == Trans::kNo) {
        const T* src = b + q * ldb + j0 + jb;
        std::copy(src, src + cols, out);
      } else {
        for (std::size_t c = 0; c < cols; ++c) out[c] = b[(j0 + jb + c) * ldb + q];
      }
      for (std::size_t c = cols; c < nr; ++c) out[c] = T(0);
      out += nr;
    }
  }
}

void micro_kernel(std::size_t kc, const float* ap, const float* bp, float alpha,
                  float* c, std::size_t ldc, std::size_t rows, std::size_t cols) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_loadu_ps(bp);
    const __m256 b1 = _mm256_loadu_ps(bp + 8);
    __m256 a = _mm256_broadcast_ss(ap + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(ap + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(ap + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(ap + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(ap + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(ap + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    ap += 6;
    bp += 16;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  const __m256 acc[6][2] = {{c00, c01}, {c10, c11}, {c20, c21},
                            {c30, c31}, {c40, c41}, {c50, c51}};
  if (rows == 6 && cols == 16) {
    for (std::size_t r = 0; r < 6; ++r) {
      float* crow = c + r * ldc;
      _mm256_storeu_ps(crow, _mm256_fmadd_ps(va, acc[r][0], _mm256_loadu_ps(crow)));
      _mm256_storeu_ps(crow + 8,
                       _mm256_fmadd_ps(va, acc[r][1], _mm256_loadu_ps(crow + 8)));
    }
    return;
  }
  alignas(32) float tile[6][16];
  for (std::size_t r = 0; r < 6; ++r) {
    _mm256_store_ps(tile[r], acc[r][0]);
    _mm256_store_ps(tile[r] + 8, acc[r][1]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += alpha * tile[r][j];
  }
}

void micro_kernel(std::size_t kc, const double* ap, const double* bp,
                  double alpha, double* c, std::size_t ldc, std::size_t rows,
                  std::size_t cols) {
  __m256d acc[6][2];
  for (auto& row : acc) row[0] = row[1] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    for (std::size_t r = 0; r < 6; ++r) {
      const __m256d a = _mm256_broadcast_sd(ap + r);
      acc[r][0] = _mm256_fmadd_pd(a, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(a, b1, acc[r][1]);
    }
    ap += 6;
    bp += 8;
  }
  alignas(32) double tile[6][8];
  for (std::size_t r = 0; r < 6; ++r) {
    _mm256_store_pd(tile[r], acc[r][0]);
    _mm256_store_pd(tile[r] + 4, acc[r][1]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += alpha * tile[r][j];
  }
}

template <typename T>
void gemm_avx2(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
               std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using B = Blocking<T>;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    } else if (beta != T(1)) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (k == 0 || alpha == T(0)) return;

  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;
  packed_a.resize(B::kMc * B::kKc);
  packed_b.resize(B::kKc * B::kNc);

  for (std::size_t j0 = 0; j0 < n; j0 += B::kNc) {
    const std::size_t nc = std::min(B::kNc, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += B::kKc) {
      const std::size_t kc = std::min(B::kKc, k - p0);
      pack_b(trans_b, b, ldb, p0, kc, j0, nc, packed_b.data());
      for (std::size_t i0 = 0; i0 < m; i0 += B::kMc) {
        const std::size_t mc = std::min(B::kMc, m - i0);
        pack_a(trans_a, a, lda, i0, mc, p0, kc, packed_a.data());
        for (std::size_t jb = 0; jb < nc; jb += B::kNr) {
          const std::size_t cols = std::min(B::kNr, nc - jb);
          const T* bp = packed_b.data() + (jb / B::kNr) * kc * B::kNr;
          for (std::size_t ib = 0; ib < mc; ib += B::kMr) {
            const std::size_t rows = std::min(B::kMr, mc - ib);
            const T* ap = packed_a.data() + (ib / B::kMr) * kc * B::kMr;
            micro_kernel(kc, ap, bp, alpha, c + (i0 + ib) * ldc + j0 + jb, ldc,
                         rows, cols);
          }
        }
      }
    }
  }
}

float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  lo = _mm_hadd_pd(lo, lo);
  return _mm_cvtsd_f64(lo);
}

void axpy_f32(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot_f32(std::size_t n, const float* x, const float* y) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8),
                           acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float total = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

double dot_f64(std::size_t n, const double* x, const double* y) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

float sum_f32(std::size_t n, const float* x) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(x + i + 8));
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
  float total = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) total += x[i];
  return total;
}

double sum_f64(std::size_t n, const double* x) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

void leaky_relu_f32(std::size_t n, float slope, const float* x, float* y) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 neg = _mm256_cmp_ps(v, zero, _CMP_LT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(v, _mm256_mul_ps(v, vs), neg));
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
}

void leaky_relu_backward_f32(std::size_t n, float slope, const float* x,
                             const float* dy, float* dx) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 neg = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_LT_OQ);
    const __m256 g = _mm256_loadu_ps(dy + i);
    const __m256 scaled = _mm256_blendv_ps(g, _mm256_mul_ps(g, vs), neg);
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), scaled));
  }
  for (; i < n; ++i) dx[i] += x[i] >= 0.0f ? dy[i] : slope * dy[i];
}

void leaky_relu_f64(std::size_t n, double slope, const double* x, double* y) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d neg = _mm256_cmp_pd(v, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(v, _mm256_mul_pd(v, vs), neg));
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}

void leaky_relu_backward_f64(std::size_t n, double slope, const double* x,
                             const double* dy, double* dx) {
  const __m256d vs = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d neg = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_LT_OQ);
    const __m256d g = _mm256_loadu_pd(dy + i);
    const __m256d scaled = _mm256_blendv_pd(g, _mm256_mul_pd(g, vs), neg);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), scaled));
  }
  for (; i < n; ++i) dx[i] += x[i] >= 0.0 ? dy[i] : slope * dy[i];
}

KernelTable<float> make_f32() {
  KernelTable<float> t;
  t.level = Level::kAvx2;
  t.gemm = &gemm_avx2<float>;
  t.axpy = &axpy_f32;
  t.dot = &dot_f32;
  t.sum = &sum_f32;
  t.leaky_relu = &leaky_relu_f32;
  t.leaky_relu_backward = &leaky_relu_backward_f32;
  return t;
}

KernelTable<double> make_f64() {
  KernelTable<double> t;
  t.level = Level::kAvx2;
  t.gemm = &gemm_avx2<double>;
  t.axpy = &axpy_f64;
  t.dot = &dot_f64;
  t.sum = &sum_f64;
  t.leaky_relu = &leaky_relu_f64;
  t.leaky_relu_backward = &leaky_relu_backward_f64;
  return t;
}

}  // namespace

const KernelTable<float>* avx2_kernels_f32() noexcept {
  if (!cpu_supports(Level::kAvx2)) return nullptr;
  static const KernelTable<float> table = make_f32();
  return &table;
}

const KernelTable<double>* avx2_kernels_f64() noexcept {
  if (!cpu_supports(Level::kAvx2)) return nullptr;
  static const KernelTable<double> table = make_f64();
  return &table;
}

}  // namespace kdlite::simd

#else

namespace kdlite::simd {

const KernelTable<float>* avx2_kernels_f32() noexcept { return nullptr; }
const KernelTable<double>* avx2_kernels_f64() noexcept { return nullptr; }

}  // namespace kdlite::simd

#endif
