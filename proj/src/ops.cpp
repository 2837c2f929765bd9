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

#include "kdlite/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kdlite/errors.hpp"
#include "kdlite/simd/kernels.hpp"
#include "detail/op_support.hpp"

namespace kdlite {
namespace {

using simd::Trans;
using detail::finish;

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op,
                  const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " +
                         (t.defined() ? to_string(t.shape()) : "undefined"));
  }
}

// col is (C*k*k) x (Ho*Wo), row index (c*k + ki)*k + kj.
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k, std::size_t stride,
            std::size_t out_h, std::size_t out_w, T* col) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const T* src = xc + (oy * stride + ki) * width + kj;
          T* d = dst + oy * out_w;
          if (stride == 1) {
            std::copy(src, src + out_w, d);
          } else {
            for (std::size_t ox = 0; ox < out_w; ++ox) d[ox] = src[ox * stride];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height,
                std::size_t width, std::size_t k, std::size_t stride,
                std::size_t out_h, std::size_t out_w, T* dx) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = dx + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          T* d = xc + (oy * stride + ki) * width + kj;
          const T* s = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) d[ox * stride] += s[ox];
        }
      }
    }
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

std::string_view activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::kNone:
      return "none";
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kSigmoid:
      return "sigmoid";
  }
  return "none";
}

Activation parse_activation(std::string_view name) {
  if (name == "none") return Activation::kNone;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t window_output_extent(std::size_t in, std::size_t window,
                                 std::size_t stride) {
  if (window == 0 || stride == 0) {
    throw DimensionError("window and stride must be positive");
  }
  if (in < window) {
    throw DimensionError("window " + std::to_string(window) +
                         " larger than input extent " + std::to_string(in));
  }
  return (in - window) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, std::size_t stride) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t f = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == c, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                  " input channels, input has " + std::to_string(c));
  require(weight.dim(3) == k, "conv2d: kernel must be square");
  require(bias.defined() && bias.size() == f,
          "conv2d: bias must have " + std::to_string(f) + " elements");
  const std::size_t oh = window_output_extent(h, k, stride);
  const std::size_t ow = window_output_extent(w, k, stride);
  const std::size_t kk = c * k * k, plane = oh * ow;
  const auto& kern = simd::kernels<T>();

  std::vector<T> out(n * f * plane);
  std::vector<T> col(kk * plane);
  const T* x = input.data().data();
  const T* wt = weight.data().data();
  const T* b = bias.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    im2col(x + s * c * h * w, c, h, w, k, stride, oh, ow, col.data());
    T* y = out.data() + s * f * plane;
    kern.gemm(Trans::kNo, Trans::kNo, f, plane, kk, T(1), wt, kk, col.data(), plane,
              T(0), y, plane);
    for (std::size_t o = 0; o < f; ++o) {
      T* row = y + o * plane;
      for (std::size_t p = 0; p < plane; ++p) row[p] += b[o];
    }
  }

  NodePtr<T> xin = input.node(), win = weight.node(), bin = bias.node();
  return finish<T>(
      "conv2d", Shape{n, f, oh, ow}, std::move(out), {&input, &weight, &bias},
      [=](const TensorNode<T>& node) {
        const auto& kern = simd::kernels<T>();
        const T* dy_all = node.grad.data();
        std::vector<T> col(kk * plane);
        for (std::size_t s = 0; s < n; ++s) {
          const T* dy = dy_all + s * f * plane;
          if (bin->requires_grad) {
            for (std::size_t o = 0; o < f; ++o) bin->grad[o] += kern.sum(plane, dy + o * plane);
          }
          if (win->requires_grad) {
            im2col(xin->data.data() + s * c * h * w, c, h, w, k, stride, oh, ow,
                   col.data());
            kern.gemm(Trans::kNo, Trans::kYes, f, kk, plane, T(1), dy, plane,
                      col.data(), plane, T(1), win->grad.data(), kk);
          }
          if (xin->requires_grad) {
            kern.gemm(Trans::kYes, Trans::kNo, kk, plane, f, T(1), win->data.data(),
                      kk, dy, plane, T(0), col.data(), plane);
            col2im_add(col.data(), c, h, w, k, stride, oh, ow,
                       xin->grad.data() + s * c * h * w);
          }
        }
      });
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, std::size_t size, std::size_t stride) {
  require_rank(input, 4, "avgpool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                    w = input.dim(3);
  const std::size_t oh = window_output_extent(h, size, stride);
  const std::size_t ow = window_output_extent(w, size, stride);
  const T inv = T(1) / static_cast<T>(size * size);
  std::vector<T> out(n * c * oh * ow);
  const T* x = input.data().data();
  for (std::size_t pc = 0; pc < n * c; ++pc) {
    const T* xp = x + pc * h * w;
    T* yp = out.data() + pc * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = 0;
        for (std::size_t i = 0; i < size; ++i) {
          const T* row = xp + (oy * stride + i) * w + ox * stride;
          for (std::size_t j = 0; j < size; ++j) acc += row[j];
        }
        yp[oy * ow + ox] = acc * inv;
      }
    }
  }
  NodePtr<T> xin = input.node();
  return finish<T>("avgpool2d", Shape{n, c, oh, ow}, std::move(out), {&input},
                   [=](const TensorNode<T>& node) {
                     for (std::size_t pc = 0; pc < n * c; ++pc) {
                       T* dx = xin->grad.data() + pc * h * w;
                       const T* dy = node.grad.data() + pc * oh * ow;
                       for (std::size_t oy = 0; oy < oh; ++oy) {
                         for (std::size_t ox = 0; ox < ow; ++ox) {
                           const T g = dy[oy * ow + ox] * inv;
                           for (std::size_t i = 0; i < size; ++i) {
                             T* row = dx + (oy * stride + i) * w + ox * stride;
                             for (std::size_t j = 0; j < size; ++j) row[j] += g;
                           }
                         }
                       }
                     }
                   });
}

template <typename T>
BatchNormStats<T>::BatchNormStats(std::size_t channels)
    : running_mean(Shape{channels}, T(0)),
      running_var(Shape{channels}, T(1)),
      initialized(true) {}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma,
                    const Tensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                    const BatchNormOptions& options) {
  require_rank(input, 4, "batchnorm", "input");
  const std::size_t n = input.dim(0), c = input.dim(1),
                    plane = input.dim(2) * input.dim(3);
  require(gamma.defined() && gamma.size() == c && beta.defined() && beta.size() == c,
          "batchnorm: gamma/beta must have " + std::to_string(c) + " elements");
  if (options.epsilon <= 0.0 || options.momentum < 0.0 || options.momentum > 1.0) {
    throw ConfigError("batchnorm: epsilon must be > 0 and momentum in [0, 1]");
  }
  const std::size_t count = n * plane;
  const T* x = input.data().data();
  std::vector<T> xhat(input.size());
  std::vector<T> inv_std(c);

  if (mode == Mode::kTrain) {
    if (count == 0) throw DimensionError("batchnorm: empty batch");
    const bool have_stats = stats.initialized && stats.running_mean.defined() &&
                            stats.running_mean.size() == c;
    if (!have_stats) stats = BatchNormStats<T>(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      const double is = 1.0 / std::sqrt(var + options.epsilon);
      inv_std[ch] = static_cast<T>(is);
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * plane;
        T* q = xhat.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) q[i] = static_cast<T>((p[i] - mu) * is);
      }
      const double m = options.momentum;
      T& rm = stats.running_mean.data()[ch];
      T& rv = stats.running_var.data()[ch];
      rm = static_cast<T>(m * rm + (1.0 - m) * mu);
      rv = static_cast<T>(m * rv + (1.0 - m) * var);
    }
  } else {
    if (!stats.initialized || !stats.running_mean.defined() ||
        stats.running_mean.size() != c || stats.running_var.size() != c) {
      throw StateError("batchnorm: eval mode requires initialized running statistics");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double mu = stats.running_mean.data()[ch];
      const double is = 1.0 / std::sqrt(static_cast<double>(stats.running_var.data()[ch]) +
                                        options.epsilon);
      inv_std[ch] = static_cast<T>(is);
      for (std::size_t s = 0; s < n; ++s) {
        const T* p = x + (s * c + ch) * plane;
        T* q = xhat.data() + (s * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) q[i] = static_cast<T>((p[i] - mu) * is);
      }
    }
  }

  std::vector<T> out(input.size());
  const T* g = gamma.data().data();
  const T* b = beta.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* q = xhat.data() + (s * c + ch) * plane;
      T* y = out.data() + (s * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) y[i] = g[ch] * q[i] + b[ch];
    }
  }

  NodePtr<T> xin = input.node(), gin = gamma.node(), bin = beta.node();
  const bool train = mode == Mode::kTrain;
  return finish<T>(
      "batchnorm", input.shape(), std::move(out), {&input, &gamma, &beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TensorNode<T>& node) {
        const T* dy = node.grad.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double dgamma = 0.0, dbeta = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const T* gy = dy + (s * c + ch) * plane;
            const T* q = xhat.data() + (s * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dgamma += static_cast<double>(gy[i]) * q[i];
              dbeta += gy[i];
            }
          }
          if (gin->requires_grad) gin->grad[ch] += static_cast<T>(dgamma);
          if (bin->requires_grad) bin->grad[ch] += static_cast<T>(dbeta);
          if (!xin->requires_grad) continue;
          const double gam = gin->data[ch];
          const double is = inv_std[ch];
          for (std::size_t s = 0; s < n; ++s) {
            const T* gy = dy + (s * c + ch) * plane;
            const T* q = xhat.data() + (s * c + ch) * plane;
            T* dx = xin->grad.data() + (s * c + ch) * plane;
            if (train) {
              const double cnt = static_cast<double>(count);
              const double scale_factor = gam * is / cnt;
              for (std::size_t i = 0; i < plane; ++i) {
                dx[i] += static_cast<T>(scale_factor *
                                        (cnt * gy[i] - dbeta - q[i] * dgamma));
              }
            } else {
              for (std::size_t i = 0; i < plane; ++i) dx[i] += static_cast<T>(gam * is * gy[i]);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind, double leaky_slope) {
  if (kind == Activation::kNone) return input;
  const std::size_t size = input.size();
  std::vector<T> out(size);
  const T* x = input.data().data();
  NodePtr<T> xin = input.node();
  if (kind == Activation::kSigmoid) {
    for (std::size_t i = 0; i < size; ++i) out[i] = sigmoid_scalar(x[i]);
    std::vector<T> y = out;
    return finish<T>("sigmoid", input.shape(), std::move(out), {&input},
                     [=, y = std::move(y)](const TensorNode<T>& node) {
                       for (std::size_t i = 0; i < size; ++i) {
                         xin->grad[i] += node.grad[i] * y[i] * (T(1) - y[i]);
                       }
                     });
  }
  const T slope = kind == Activation::kRelu ? T(0) : static_cast<T>(leaky_slope);
  simd::kernels<T>().leaky_relu(size, slope, x, out.data());
  return finish<T>(kind == Activation::kRelu ? "relu" : "leaky_relu", input.shape(),
                   std::move(out), {&input}, [=](const TensorNode<T>& node) {
                     simd::kernels<T>().leaky_relu_backward(size, slope, xin->data.data(),
                                                            node.grad.data(),
                                                            xin->grad.data());
                   });
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
  require(weight.dim(0) == d, "dense: input has " + std::to_string(d) +
                                  " features, weight expects " +
                                  std::to_string(weight.dim(0)));
  require(bias.defined() && bias.size() == m,
          "dense: bias must have " + std::to_string(m) + " elements");
  std::vector<T> out(n * m);
  simd::kernels<T>().gemm(Trans::kNo, Trans::kNo, n, m, d, T(1), input.data().data(), d,
                          weight.data().data(), m, T(0), out.data(), m);
  const T* b = bias.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += b[j];
  }
  NodePtr<T> xin = input.node(), win = weight.node(), bin = bias.node();
  return finish<T>("dense", Shape{n, m}, std::move(out), {&input, &weight, &bias},
                   [=](const TensorNode<T>& node) {
                     const auto& kern = simd::kernels<T>();
                     const T* dy = node.grad.data();
                     if (xin->requires_grad) {
                       kern.gemm(Trans::kNo, Trans::kYes, n, d, m, T(1), dy, m,
                                 win->data.data(), m, T(1), xin->grad.data(), d);
                     }
                     if (win->requires_grad) {
                       kern.gemm(Trans::kYes, Trans::kNo, d, m, n, T(1),
                                 xin->data.data(), d, dy, m, T(1), win->grad.data(), m);
                     }
                     if (bin->requires_grad) {
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j) bin->grad[j] += dy[i * m + j];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return input;
  const std::size_t size = input.size();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(size);
  for (auto& v : mask) v = uniform01(rng) < rate ? T(0) : keep_scale;
  std::vector<T> out(size);
  const T* x = input.data().data();
  for (std::size_t i = 0; i < size; ++i) out[i] = x[i] * mask[i];
  NodePtr<T> xin = input.node();
  return finish<T>("dropout", input.shape(), std::move(out), {&input},
                   [=, mask = std::move(mask)](const TensorNode<T>& node) {
                     for (std::size_t i = 0; i < size; ++i) {
                       xin->grad[i] += node.grad[i] * mask[i];
                     }
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape shape) {
  if (numel(shape) != input.size()) {
    throw DimensionError("reshape: cannot view " + to_string(input.shape()) + " as " +
                         to_string(shape));
  }
  NodePtr<T> xin = input.node();
  return finish<T>("reshape", std::move(shape), input.values(), {&input},
                   [=](const TensorNode<T>& node) {
                     simd::kernels<T>().axpy(node.grad.size(), T(1), node.grad.data(),
                                             xin->grad.data());
                   });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
  if (!input.defined() || input.rank() < 1) {
    throw DimensionError("flatten: input needs a batch dimension");
  }
  const std::size_t n = input.dim(0);
  return reshape(input, Shape{n, n == 0 ? 0 : input.size() / n});
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " +
                         (a.defined() ? to_string(a.shape()) : "?") + " and " +
                         (b.defined() ? to_string(b.shape()) : "?") + " differ");
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.values());
  simd::kernels<T>().axpy(out.size(), T(1), b.data().data(), out.data());
  NodePtr<T> an = a.node(), bn = b.node();
  return finish<T>("add", a.shape(), std::move(out), {&a, &b},
                   [=](const TensorNode<T>& node) {
                     const auto& kern = simd::kernels<T>();
                     if (an->requires_grad) kern.axpy(node.grad.size(), T(1), node.grad.data(), an->grad.data());
                     if (bn->requires_grad) kern.axpy(node.grad.size(), T(1), node.grad.data(), bn->grad.data());
                   });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.values());
  simd::kernels<T>().axpy(out.size(), T(-1), b.data().data(), out.data());
  NodePtr<T> an = a.node(), bn = b.node();
  return finish<T>("sub", a.shape(), std::move(out), {&a, &b},
                   [=](const TensorNode<T>& node) {
                     const auto& kern = simd::kernels<T>();
                     if (an->requires_grad) kern.axpy(node.grad.size(), T(1), node.grad.data(), an->grad.data());
                     if (bn->requires_grad) kern.axpy(node.grad.size(), T(-1), node.grad.data(), bn->grad.data());
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const std::size_t size = a.size();
  std::vector<T> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = a.data()[i] * b.data()[i];
  NodePtr<T> an = a.node(), bn = b.node();
  return finish<T>("mul", a.shape(), std::move(out), {&a, &b},
                   [=](const TensorNode<T>& node) {
                     for (std::size_t i = 0; i < size; ++i) {
                       if (an->requires_grad) an->grad[i] += node.grad[i] * bn->data[i];
                       if (bn->requires_grad) bn->grad[i] += node.grad[i] * an->data[i];
                     }
                   });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values());
  for (auto& v : out) v *= factor;
  NodePtr<T> an = a.node();
  return finish<T>("scale", a.shape(), std::move(out), {&a},
                   [=](const TensorNode<T>& node) {
                     simd::kernels<T>().axpy(node.grad.size(), factor, node.grad.data(),
                                             an->grad.data());
                   });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return mul(a, a);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  const T total = simd::kernels<T>().sum(a.size(), a.data().data());
  NodePtr<T> an = a.node();
  return finish<T>("sum", Shape{}, std::vector<T>{total}, {&a},
                   [=](const TensorNode<T>& node) {
                     const T g = node.grad[0];
                     for (auto& v : an->grad) v += g;
                   });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> binary_cross_entropy(const Tensor<T>& probs, std::span<const T> targets,
                               double clamp) {
  const std::size_t n = probs.defined() ? probs.size() : 0;
  if (n == 0 || targets.size() != n ||
      !(probs.rank() == 1 || (probs.rank() == 2 && probs.dim(1) == 1))) {
    throw DimensionError("binary_cross_entropy: expected N or Nx1 probabilities "
                         "with N targets");
  }
  const T lo = static_cast<T>(clamp), hi = static_cast<T>(1.0 - clamp);
  double total = 0.0;
  const T* q = probs.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double qc = std::clamp(q[i], lo, hi);
    const double p = targets[i];
    total -= p * std::log(qc) + (1.0 - p) * std::log(1.0 - qc);
  }
  const T loss = static_cast<T>(total / static_cast<double>(n));
  NodePtr<T> qn = probs.node();
  std::vector<T> p(targets.begin(), targets.end());
  return finish<T>("binary_cross_entropy", Shape{}, std::vector<T>{loss}, {&probs},
                   [=, p = std::move(p)](const TensorNode<T>& node) {
                     const T g = node.grad[0] / static_cast<T>(n);
                     for (std::size_t i = 0; i < n; ++i) {
                       const T qi = qn->data[i];
                       if (qi < lo || qi > hi) continue;
                       qn->grad[i] += g * (-(p[i] / qi) + (T(1) - p[i]) / (T(1) - qi));
                     }
                   });
}

#define KDLITE_INSTANTIATE_OPS(T)                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,     \
                            std::size_t);                                            \
  template Tensor<T> avgpool2d(const Tensor<T>&, std::size_t, std::size_t);           \
  template struct BatchNormStats<T>;                                                  \
  template Tensor<T> batchnorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                               BatchNormStats<T>&, Mode, const BatchNormOptions&);    \
  template Tensor<T> activation(const Tensor<T>&, Activation, double);                \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> dropout(const Tensor<T>&, double, Mode, Rng&);                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                \
  template Tensor<T> flatten(const Tensor<T>&);                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                      \
  template Tensor<T> square(const Tensor<T>&);                                        \
  template Tensor<T> sum(const Tensor<T>&);                                           \
  template Tensor<T> mean(const Tensor<T>&);                                          \
  template Tensor<T> binary_cross_entropy(const Tensor<T>&, std::span<const T>, double);

KDLITE_INSTANTIATE_OPS(float)
KDLITE_INSTANTIATE_OPS(double)

}  // namespace kdlite
