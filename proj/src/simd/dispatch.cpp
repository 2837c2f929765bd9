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

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kdlite/simd/kernels.hpp"

namespace kdlite::simd {
namespace {

std::atomic<Level>& current() {
  static std::atomic<Level> level{detect_level()};
  return level;
}

}  // namespace

std::string_view level_name(Level level) noexcept {
  switch (level) {
    case Level::kScalar:
      return "scalar";
    case Level::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Level level) noexcept {
  switch (level) {
    case Level::kScalar:
      return true;
    case Level::kAvx2:
#if defined(KDLITE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Level detect_level() noexcept {
  if (const char* env = std::getenv("KDLITE_SIMD")) {
    if (std::string_view(env) == "scalar") return Level::kScalar;
  }
  return cpu_supports(Level::kAvx2) ? Level::kAvx2 : Level::kScalar;
}

Level active_level() noexcept { return current().load(std::memory_order_relaxed); }

bool set_level(Level level) noexcept {
  if (!cpu_supports(level)) return false;
  current().store(level, std::memory_order_relaxed);
  return true;
}

template <>
const KernelTable<float>& kernels<float>() noexcept {
  if (active_level() == Level::kAvx2) {
    if (const auto* t = avx2_kernels_f32()) return *t;
  }
  return scalar_kernels<float>();
}

template <>
const KernelTable<double>& kernels<double>() noexcept {
  if (active_level() == Level::kAvx2) {
    if (const auto* t = avx2_kernels_f64()) return *t;
  }
  return scalar_kernels<double>();
}

}  // namespace kdlite::simd
