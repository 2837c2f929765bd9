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

// LCNN v1 model container (little-endian):
//
//   "LCNN"  u16 major  u16 minor  u64 seed
//   u32 spec_len  spec text (kdlite-model-spec)
//   u32 parameter count, then per parameter:
//     u16 name_len  name  u8 trainable  u8 rank  rank x u32 dims  f32 data
//   u32 CRC32 of every preceding byte
//
// Readers accept any minor version of a known major.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kdlite/architecture.hpp"

namespace kdlite {

inline constexpr std::uint16_t kModelFormatMajor = 1;
inline constexpr std::uint16_t kModelFormatMinor = 0;

std::vector<std::uint8_t> serialize_model(const Model& model);

/// Throws DataError on a bad magic, truncation or checksum mismatch, and
/// VersionError when the major version is newer than this reader.
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace kdlite
