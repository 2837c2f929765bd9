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

// Image decoding and resizing, dataset manifests, the synthetic two-class
// generator, the ATMAP teacher-output format and the soft-label sidecar.
//
// Pixels are RGB, planar (3 x H x W), scaled to [0, 1] by dividing by the
// codec's maximum sample value (255 for 8-bit files).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdlite/distillation.hpp"
#include "kdlite/tensor.hpp"

namespace kdlite {

inline constexpr std::size_t kChannels = 3;

struct ImageRecord {
  std::string source;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // 3 x H x W

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  Tensor<float> to_tensor() const;
};

/// Decodes PNG (via libpng) or binary/ASCII PPM/PGM (P6, P3, P5, P2).
/// Grayscale is broadcast to three channels and alpha is dropped. Throws
/// DataError on a decode failure or an unsupported format.
ImageRecord decode_image(std::span<const std::uint8_t> bytes, std::string source = {});
ImageRecord load_image(const std::filesystem::path& path);

/// Binary PPM (P6, maxval 255); values are rounded to the nearest level.
std::vector<std::uint8_t> encode_ppm(const ImageRecord& image);
void save_ppm(const std::filesystem::path& path, const ImageRecord& image);

/// Bilinear resampling with pixel-centre alignment: output pixel i samples
/// source coordinate (i + 0.5) * in / out - 0.5, clamped to the image.
ImageRecord resize(const ImageRecord& image, std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestRow {
  std::uint32_t id = 0;
  std::string source;  // relative file path or "synth:<seed>:<index>:<label>:<size>"
  int label = 0;
  std::string split;   // optional tag, may be empty
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  /// Unique ids and binary labels; throws DataError otherwise.
  void validate() const;
  std::size_t positives() const;
};

/// CSV with header `id,source,label,split`, LF line endings. Fields holding
/// a comma, quote or newline are quoted with doubled quotes.
std::string format_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Images of one resolution stored contiguously, N x 3 x H x W.
struct ImageSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> ids;
  std::vector<int> labels;
  std::vector<std::string> splits;
  std::vector<float> pixels;

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t sample_size() const noexcept { return kChannels * height * width; }
  std::span<const float> sample(std::size_t i) const {
    return {pixels.data() + i * sample_size(), sample_size()};
  }
  std::span<float> sample(std::size_t i) {
    return {pixels.data() + i * sample_size(), sample_size()};
  }
  ImageSet subset(std::span<const std::size_t> indices) const;
  void append(std::uint32_t id, int label, std::string split, std::span<const float> pixels);
};

/// Loads every manifest row (files relative to `base_dir`, synthetic
/// descriptors re-rendered) and resizes to height x width where needed.
/// Samples keep manifest order.
ImageSet load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                      std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Synthetic two-class data

inline constexpr double kDefaultPositiveFraction = 0.41;

/// Renders one sample: a dark elliptical body on a light ground with eight
/// legs (label 1) or six legs and a pale dorsal blotch (label 0). Pose, scale,
/// tint and noise are drawn from a stream derived from (seed, index, label).
/// Values are quantized to multiples of 1/255.
ImageRecord render_synthetic(std::uint64_t seed, std::uint32_t index, int label,
                             std::size_t size);

std::string synthetic_descriptor(std::uint64_t seed, std::uint32_t index, int label,
                                 std::size_t size);
bool is_synthetic_descriptor(std::string_view source);
ImageRecord render_descriptor(std::string_view descriptor);

struct SyntheticDataset {
  DatasetManifest manifest;
  ImageSet images;
};

/// round(n * positive_fraction) positives placed in seed-shuffled order,
/// ids 0..n-1. Throws ConfigError when n < 2 or the fraction leaves a class
/// empty.
SyntheticDataset generate_synthetic_dataset(std::size_t n,
                                            double positive_fraction = kDefaultPositiveFraction,
                                            std::size_t size = 96, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// ATMAP v1: "ATMP", u16 version, u32 count, records of
// (u32 id, f32 logit, u16 H, u16 W, H*W f32), trailing CRC32 of all prior
// bytes. All integers and floats little-endian.

inline constexpr std::uint16_t kAtmapVersion = 1;

struct AttentionRecord {
  std::uint32_t id = 0;
  float logit = 0.0f;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::vector<float> values;
};

/// Throws ContractError if records disagree on H x W, a value count does not
/// match H * W, or an id repeats.
std::vector<std::uint8_t> encode_attention_file(std::span<const AttentionRecord> records);
std::vector<AttentionRecord> decode_attention_file(std::span<const std::uint8_t> bytes);
void write_attention_file(const std::filesystem::path& path,
                          std::span<const AttentionRecord> records);
std::vector<AttentionRecord> read_attention_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Soft-label sidecar: CSV `id,p1,origin`, p1 printed with 17 significant
// digits so it parses back to the same double; p0 is restored as 1 - p1.

std::string format_soft_labels(std::span<const SoftLabelRecord> records);
std::vector<SoftLabelRecord> parse_soft_labels(std::string_view text);
void write_soft_labels(const std::filesystem::path& path,
                       std::span<const SoftLabelRecord> records);
std::vector<SoftLabelRecord> read_soft_labels(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace kdlite
