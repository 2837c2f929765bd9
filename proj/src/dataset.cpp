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

#include "kdlite/dataset.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <unordered_set>

#include <png.h>

#include "detail/binary_io.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/random.hpp"

namespace kdlite {

Tensor<float> ImageRecord::to_tensor() const {
  return Tensor<float>(Shape{kChannels, height, width}, pixels);
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---------------------------------------------------------------------------
// Codecs

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::array<std::uint8_t, 8> kSig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return bytes.size() >= kSig.size() && std::equal(kSig.begin(), kSig.end(), bytes.begin());
}

ImageRecord decode_png(std::span<const std::uint8_t> bytes, std::string source) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("PNG decode failed for '" + source + "': " + image.message);
  }
  // Read with alpha so that transparent pixels keep their colour instead of
  // being composited; the alpha channel is then ignored.
  image.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw DataError("PNG decode failed for '" + source + "': " + message);
  }
  ImageRecord out;
  out.source = std::move(source);
  out.height = image.height;
  out.width = image.width;
  out.pixels.resize(kChannels * out.height * out.width);
  const std::size_t plane = out.height * out.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      out.pixels[c * plane + i] = static_cast<float>(buffer[i * 4 + c] / 255.0);
    }
  }
  return out;
}

class PnmParser {
 public:
  PnmParser(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  unsigned long next_number() {
    skip_space_and_comments();
    unsigned long value = 0;
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 0xFFFFFFFFul) fail("number out of range");
      ++pos_;
    }
    if (pos_ == start) fail("truncated or malformed header");
    return value;
  }

  /// After the maxval, exactly one whitespace byte precedes the raster.
  void skip_single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("truncated header");
    ++pos_;
  }

  std::size_t sample(bool binary, unsigned long maxval) {
    if (!binary) {
      const auto v = next_number();
      if (v > maxval) fail("sample exceeds maxval");
      return v;
    }
    if (maxval < 256) {
      if (pos_ >= bytes_.size()) fail("truncated raster");
      const std::size_t v = bytes_[pos_++];
      if (v > maxval) fail("sample exceeds maxval");
      return v;
    }
    if (pos_ + 2 > bytes_.size()) fail("truncated raster");
    const std::size_t v = (std::size_t{bytes_[pos_]} << 8) | bytes_[pos_ + 1];
    pos_ += 2;
    if (v > maxval) fail("sample exceeds maxval");
    return v;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw DataError("PNM decode failed for '" + source_ + "': " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  const std::string& source_;
  std::size_t pos_ = 2;
};

ImageRecord decode_pnm(std::span<const std::uint8_t> bytes, std::string source) {
  const char kind = static_cast<char>(bytes[1]);
  const bool color = kind == '6' || kind == '3';
  const bool binary = kind == '6' || kind == '5';
  PnmParser p(bytes, source);
  const auto width = p.next_number();
  const auto height = p.next_number();
  const auto maxval = p.next_number();
  if (width == 0 || height == 0) p.fail("empty image");
  if (maxval == 0 || maxval > 65535) p.fail("maxval out of range");
  if (width * height > (1ul << 28)) p.fail("image too large");
  if (binary) p.skip_single_whitespace();

  ImageRecord out;
  out.height = height;
  out.width = width;
  const std::size_t plane = height * width;
  out.pixels.resize(kChannels * plane);
  const double levels = static_cast<double>(maxval);
  for (std::size_t i = 0; i < plane; ++i) {
    if (color) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        out.pixels[c * plane + i] = static_cast<float>(p.sample(binary, maxval) / levels);
      }
    } else {
      const float v = static_cast<float>(p.sample(binary, maxval) / levels);
      for (std::size_t c = 0; c < kChannels; ++c) out.pixels[c * plane + i] = v;
    }
  }
  out.source = std::move(source);
  return out;
}

}  // namespace

ImageRecord decode_image(std::span<const std::uint8_t> bytes, std::string source) {
  if (is_png(bytes)) return decode_png(bytes, std::move(source));
  if (bytes.size() >= 2 && bytes[0] == 'P' &&
      (bytes[1] == '6' || bytes[1] == '3' || bytes[1] == '5' || bytes[1] == '2')) {
    return decode_pnm(bytes, std::move(source));
  }
  throw DataError("unsupported image format for '" + source + "' (expected PNG or PPM)");
}

ImageRecord load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_image(bytes, path.string());
}

std::vector<std::uint8_t> encode_ppm(const ImageRecord& image) {
  if (image.pixels.size() != kChannels * image.height * image.width) {
    throw DimensionError("encode_ppm: pixel buffer does not match 3 x H x W");
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t plane = image.height * image.width;
  out.reserve(out.size() + plane * kChannels);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const float v = std::clamp(image.pixels[c * plane + i], 0.0f, 1.0f);
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
    }
  }
  return out;
}

void save_ppm(const std::filesystem::path& path, const ImageRecord& image) {
  write_file_bytes(path, encode_ppm(image));
}

ImageRecord resize(const ImageRecord& image, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || image.height == 0 || image.width == 0) {
    throw DimensionError("resize: empty source or target");
  }
  ImageRecord out;
  out.source = image.source;
  out.height = height;
  out.width = width;
  out.pixels.resize(kChannels * height * width);

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t n) {
    std::vector<Tap> t(n);
    const double ratio = static_cast<double>(in) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(image.height, height);
  const auto tx = taps(image.width, width);
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const auto& vy = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const auto& vx = tx[x];
        const double top = (1.0 - vx.frac) * image.at(c, vy.lo, vx.lo) + vx.frac * image.at(c, vy.lo, vx.hi);
        const double bottom = (1.0 - vx.frac) * image.at(c, vy.hi, vx.lo) + vx.frac * image.at(c, vy.hi, vx.hi);
        out.pixels[(c * height + y) * width + x] =
            static_cast<float>((1.0 - vy.frac) * top + vy.frac * bottom);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV helpers

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

/// Splits CSV text into records of fields (RFC 4180 quoting). Blank lines
/// are skipped; a trailing CR on a line is dropped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text, const char* what) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  auto end_row = [&] {
    if (!field.empty() && field.back() == '\r' && !quoted) field.pop_back();
    row.push_back(std::move(field));
    field.clear();
    if (!(row.size() == 1 && row[0].empty() && !field_started)) rows.push_back(std::move(row));
    row.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (ch == '\n') {
      end_row();
    } else {
      field += ch;
    }
  }
  if (quoted) throw DataError(std::string(what) + ": unterminated quoted field");
  if (!field.empty() || !row.empty() || field_started) end_row();
  return rows;
}

template <typename Int>
Int parse_int(const std::string& s, const char* what) {
  Int value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw DataError(std::string(what) + ": invalid integer '" + s + "'");
  }
  return value;
}

double parse_double(const std::string& s, const char* what) {
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw DataError(std::string(what) + ": invalid number '" + s + "'");
  }
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifests

void DatasetManifest::validate() const {
  std::unordered_set<std::uint32_t> seen;
  for (const auto& r : rows) {
    if (!seen.insert(r.id).second) throw DataError("manifest: duplicate id " + std::to_string(r.id));
    if (r.label != 0 && r.label != 1) {
      throw DataError("manifest: id " + std::to_string(r.id) + " has a non-binary label");
    }
    if (r.source.empty()) throw DataError("manifest: id " + std::to_string(r.id) + " has no source");
  }
}

std::size_t DatasetManifest::positives() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const ManifestRow& r) { return r.label == 1; }));
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out = "id,source,label,split\n";
  for (const auto& r : manifest.rows) {
    out += std::to_string(r.id);
    out += ',';
    out += csv_field(r.source);
    out += ',';
    out += std::to_string(r.label);
    out += ',';
    out += csv_field(r.split);
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  const auto rows = parse_csv(text, "manifest");
  if (rows.empty()) throw DataError("manifest: missing header");
  const auto& header = rows[0];
  const bool has_split = header.size() == 4 && header[3] == "split";
  if (header.size() < 3 || header[0] != "id" || header[1] != "source" || header[2] != "label" ||
      (header.size() == 4 && !has_split) || header.size() > 4) {
    throw DataError("manifest: header must be 'id,source,label,split'");
  }
  DatasetManifest m;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != header.size()) {
      throw DataError("manifest: line " + std::to_string(i + 1) + " has " +
                      std::to_string(f.size()) + " fields");
    }
    ManifestRow r;
    r.id = parse_int<std::uint32_t>(f[0], "manifest id");
    r.source = f[1];
    r.label = parse_int<int>(f[2], "manifest label");
    if (has_split) r.split = f[3];
    m.rows.push_back(std::move(r));
  }
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path));
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  manifest.validate();
  write_text_file(path, format_manifest(manifest));
}

// ---------------------------------------------------------------------------
// Image sets

ImageSet ImageSet::subset(std::span<const std::size_t> indices) const {
  ImageSet out;
  out.height = height;
  out.width = width;
  out.ids.reserve(indices.size());
  out.labels.reserve(indices.size());
  out.pixels.reserve(indices.size() * sample_size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("ImageSet::subset: index out of range");
    out.append(ids[i], labels[i], splits.empty() ? std::string() : splits[i], sample(i));
  }
  return out;
}

void ImageSet::append(std::uint32_t id, int label, std::string split, std::span<const float> px) {
  if (px.size() != sample_size()) {
    throw DimensionError("ImageSet::append: expected " + std::to_string(sample_size()) +
                         " values, got " + std::to_string(px.size()));
  }
  if (splits.size() < ids.size()) splits.resize(ids.size());
  ids.push_back(id);
  labels.push_back(label);
  splits.push_back(std::move(split));
  pixels.insert(pixels.end(), px.begin(), px.end());
}

ImageSet load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                      std::size_t height, std::size_t width) {
  manifest.validate();
  ImageSet set;
  set.height = height;
  set.width = width;
  set.pixels.reserve(manifest.rows.size() * set.sample_size());
  for (const auto& row : manifest.rows) {
    ImageRecord image = is_synthetic_descriptor(row.source)
                            ? render_descriptor(row.source)
                            : load_image(base_dir / std::filesystem::path(row.source));
    if (image.height != height || image.width != width) image = resize(image, height, width);
    set.append(row.id, row.label, row.split, image.pixels);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

double segment_distance_sq(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len_sq = dx * dx + dy * dy;
  double t = len_sq > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len_sq : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return ex * ex + ey * ey;
}

struct Rgb {
  double r, g, b;
};

}  // namespace

ImageRecord render_synthetic(std::uint64_t seed, std::uint32_t index, int label,
                             std::size_t size) {
  if (label != 0 && label != 1) throw ConfigError("synthetic label must be 0 or 1");
  if (size < 8) throw ConfigError("synthetic image size must be at least 8");
  Rng rng(derive_seed(seed, index, static_cast<std::uint64_t>(label)));
  const double s = static_cast<double>(size);
  constexpr double kPi = std::numbers::pi;

  // Ground: light card stock with a tint and a linear lighting gradient.
  const double card = uniform(rng, 0.80, 1.0);
  const Rgb ground{card - uniform(rng, 0.0, 0.04), card - uniform(rng, 0.0, 0.04),
                   card - uniform(rng, 0.0, 0.06)};
  const double grad_angle = uniform(rng, 0.0, 2.0 * kPi);
  const double grad_amp = uniform(rng, 0.0, 0.10);
  const double gcx = std::cos(grad_angle) / s, gcy = std::sin(grad_angle) / s;

  // Body pose. Label-0 bodies are drawn slightly larger so that the pale
  // blotch and the missing legs do not make them brighter on average.
  const double cx = s * (0.5 + uniform(rng, -0.08, 0.08));
  const double cy = s * (0.5 + uniform(rng, -0.08, 0.08));
  const double theta = uniform(rng, 0.0, 2.0 * kPi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double a = s * uniform(rng, 0.14, 0.22) * (label == 0 ? 1.06 : 1.0);
  const double b = a * uniform(rng, 0.55, 0.72);

  const double dark = uniform(rng, 0.06, 0.30);
  const Rgb body{dark * uniform(rng, 1.1, 1.6), dark * uniform(rng, 0.85, 1.1),
                 dark * uniform(rng, 0.6, 0.9)};
  const Rgb leg{body.r + 0.04, body.g + 0.04, body.b + 0.03};
  const Rgb tan{uniform(rng, 0.62, 0.80), uniform(rng, 0.48, 0.62), uniform(rng, 0.32, 0.45)};
  const double contrast = uniform(rng, 0.2, 0.8);
  const Rgb blotch{body.r + contrast * (tan.r - body.r), body.g + contrast * (tan.g - body.g),
                   body.b + contrast * (tan.b - body.b)};

  // Legs in the body frame (anterior along +u), mirrored on both sides.
  static constexpr std::array<double, 4> kEightLegs{35.0, 65.0, 95.0, 125.0};
  static constexpr std::array<double, 3> kSixLegs{40.0, 82.0, 124.0};
  const std::span<const double> roots =
      label == 1 ? std::span<const double>(kEightLegs) : std::span<const double>(kSixLegs);
  const double thickness = std::max(1.1, s * uniform(rng, 0.012, 0.020));
  const double half_sq = 0.25 * thickness * thickness;
  std::vector<Segment> legs;
  for (int side : {-1, 1}) {
    for (double root_deg : roots) {
      const double phi = (root_deg + uniform(rng, -8.0, 8.0)) * kPi / 180.0;
      const double u0 = 0.92 * a * std::cos(phi), v0 = side * 0.92 * b * std::sin(phi);
      const double out = phi + uniform(rng, -0.15, 0.15);
      const double l1 = a * uniform(rng, 0.45, 0.65);
      const double u1 = u0 + l1 * std::cos(out) * 1.0, v1 = v0 + side * l1 * std::sin(out);
      const double bend = out + (root_deg < 90.0 ? -1.0 : 1.0) * uniform(rng, 0.3, 0.7);
      const double l2 = a * uniform(rng, 0.40, 0.60);
      const double u2 = u1 + l2 * std::cos(bend), v2 = v1 + side * l2 * std::sin(bend);
      legs.push_back({u0, v0, u1, v1});
      legs.push_back({u1, v1, u2, v2});
    }
  }
  const double reach = 2.3 * a;
  const double noise_sigma = uniform(rng, 0.01, 0.04);

  ImageRecord out;
  out.source = synthetic_descriptor(seed, index, label, size);
  out.height = size;
  out.width = size;
  out.pixels.resize(kChannels * size * size);
  const std::size_t plane = size * size;
  static constexpr std::array<double, 2> kSub{0.25, 0.75};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      Rgb acc{0.0, 0.0, 0.0};
      for (double sy : kSub) {
        for (double sx : kSub) {
          const double px = static_cast<double>(x) + sx, py = static_cast<double>(y) + sy;
          const double dx = px - cx, dy = py - cy;
          const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
          const double lit = 1.0 + grad_amp * (gcx * dx + gcy * dy);
          Rgb c{ground.r * lit, ground.g * lit, ground.b * lit};
          if (std::abs(u) < reach && std::abs(v) < reach) {
            const double e = (u / a) * (u / a) + (v / b) * (v / b);
            const double ucap = (u - 1.02 * a) / (0.2 * a), vcap = v / (0.13 * a);
            if (e <= 1.0) {
              const double ub = (u - 0.22 * a) / (0.42 * a), vb = v / (0.48 * b);
              c = (label == 0 && ub * ub + vb * vb <= 1.0) ? blotch : body;
            } else if (ucap * ucap + vcap * vcap <= 1.0) {
              c = leg;
            } else {
              for (const auto& seg : legs) {
                if (segment_distance_sq(u, v, seg) <= half_sq) {
                  c = leg;
                  break;
                }
              }
            }
          }
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      }
      const std::array<double, 3> channels{acc.r * 0.25, acc.g * 0.25, acc.b * 0.25};
      for (std::size_t ch = 0; ch < kChannels; ++ch) {
        const double v = std::clamp(channels[ch] + noise_sigma * standard_normal(rng), 0.0, 1.0);
        out.pixels[ch * plane + y * size + x] = static_cast<float>(std::round(v * 255.0) / 255.0);
      }
    }
  }
  return out;
}

std::string synthetic_descriptor(std::uint64_t seed, std::uint32_t index, int label,
                                 std::size_t size) {
  return "synth:" + std::to_string(seed) + ":" + std::to_string(index) + ":" +
         std::to_string(label) + ":" + std::to_string(size);
}

bool is_synthetic_descriptor(std::string_view source) { return source.starts_with("synth:"); }

ImageRecord render_descriptor(std::string_view descriptor) {
  if (!is_synthetic_descriptor(descriptor)) {
    throw DataError("not a synthetic descriptor: '" + std::string(descriptor) + "'");
  }
  std::vector<std::string> parts;
  std::string_view rest = descriptor.substr(6);
  while (true) {
    const auto pos = rest.find(':');
    parts.emplace_back(rest.substr(0, pos));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  if (parts.size() != 4) {
    throw DataError("synthetic descriptor must be synth:<seed>:<index>:<label>:<size>, got '" +
                    std::string(descriptor) + "'");
  }
  const auto seed = parse_int<std::uint64_t>(parts[0], "descriptor seed");
  const auto index = parse_int<std::uint32_t>(parts[1], "descriptor index");
  const auto label = parse_int<int>(parts[2], "descriptor label");
  const auto size = parse_int<std::size_t>(parts[3], "descriptor size");
  if (label != 0 && label != 1) throw DataError("descriptor label must be 0 or 1");
  if (size < 8 || size > 4096) throw DataError("descriptor size out of range");
  return render_synthetic(seed, index, label, size);
}

SyntheticDataset generate_synthetic_dataset(std::size_t n, double positive_fraction,
                                            std::size_t size, std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthetic dataset needs n >= 2 (one sample per class)");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ConfigError("positive fraction must be in (0, 1)");
  }
  if (n > 0xFFFFFFFFull) throw ConfigError("synthetic dataset too large for 32-bit ids");
  const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_fraction));
  if (positives == 0 || positives == n) {
    throw ConfigError("positive fraction " + std::to_string(positive_fraction) +
                      " leaves a class empty for n = " + std::to_string(n));
  }
  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
  Rng order_rng(derive_seed(seed, 0x6C6162656Cull));  // "label"
  shuffle(labels.begin(), labels.end(), order_rng);

  SyntheticDataset out;
  out.images.height = size;
  out.images.width = size;
  out.images.pixels.reserve(n * kChannels * size * size);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = static_cast<std::uint32_t>(i);
    const auto image = render_synthetic(seed, id, labels[i], size);
    out.manifest.rows.push_back({id, image.source, labels[i], {}});
    out.images.append(id, labels[i], {}, image.pixels);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ATMAP

std::vector<std::uint8_t> encode_attention_file(std::span<const AttentionRecord> records) {
  if (records.size() > 0xFFFFFFFFull) throw ContractError("ATMAP: too many records");
  std::unordered_set<std::uint32_t> ids;
  for (const auto& r : records) {
    if (r.height != records.front().height || r.width != records.front().width) {
      throw ContractError("ATMAP: record " + std::to_string(r.id) + " has map " +
                          std::to_string(r.height) + "x" + std::to_string(r.width) +
                          ", expected " + std::to_string(records.front().height) + "x" +
                          std::to_string(records.front().width));
    }
    if (r.values.size() != std::size_t{r.height} * r.width) {
      throw ContractError("ATMAP: record " + std::to_string(r.id) + " holds " +
                          std::to_string(r.values.size()) + " values for a " +
                          std::to_string(r.height) + "x" + std::to_string(r.width) + " map");
    }
    if (!ids.insert(r.id).second) throw ContractError("ATMAP: duplicate id " + std::to_string(r.id));
  }
  detail::ByteWriter w;
  w.put_bytes("ATMP", 4);
  w.put<std::uint16_t>(kAtmapVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    w.put<std::uint32_t>(r.id);
    w.put<float>(r.logit);
    w.put<std::uint16_t>(r.height);
    w.put<std::uint16_t>(r.width);
    w.put_floats(r.values);
  }
  w.seal();
  return w.take();
}

std::vector<AttentionRecord> decode_attention_file(std::span<const std::uint8_t> bytes) {
  const std::string what = "ATMAP";
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ATMP", 4) != 0) {
    throw DataError("ATMAP: bad magic (not an attention-map file)");
  }
  detail::ByteReader header(bytes, what);
  header.get_string(4);
  const auto version = header.get<std::uint16_t>();
  if (version != kAtmapVersion) {
    throw VersionError("ATMAP: unsupported version " + std::to_string(version));
  }
  detail::ByteReader r(bytes.first(bytes.size() - 4), what);
  r.get_string(4);
  r.get<std::uint16_t>();
  const auto count = r.get<std::uint32_t>();
  std::vector<AttentionRecord> records;
  records.reserve(std::min<std::size_t>(count, r.remaining() / 12));
  for (std::uint32_t i = 0; i < count; ++i) {
    AttentionRecord rec;
    rec.id = r.get<std::uint32_t>();
    rec.logit = r.get<float>();
    rec.height = r.get<std::uint16_t>();
    rec.width = r.get<std::uint16_t>();
    if (!records.empty() &&
        (rec.height != records.front().height || rec.width != records.front().width)) {
      throw DataError("ATMAP: record " + std::to_string(rec.id) + " has an inconsistent map shape");
    }
    const std::size_t n = std::size_t{rec.height} * rec.width;
    if (n * sizeof(float) > r.remaining()) throw DataError("ATMAP: truncated file");
    rec.values.resize(n);
    r.get_floats(rec.values);
    records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw DataError("ATMAP: trailing bytes after the last record");
  detail::verify_crc(bytes, what);
  return records;
}

void write_attention_file(const std::filesystem::path& path,
                          std::span<const AttentionRecord> records) {
  write_file_bytes(path, encode_attention_file(records));
}

std::vector<AttentionRecord> read_attention_file(const std::filesystem::path& path) {
  return decode_attention_file(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Soft-label sidecar

std::string format_soft_labels(std::span<const SoftLabelRecord> records) {
  std::string out = "id,p1,origin\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.p1);
    out += std::to_string(r.id);
    out += ',';
    out += buf;
    out += ',';
    out += origin_name(r.origin);
    out += '\n';
  }
  return out;
}

std::vector<SoftLabelRecord> parse_soft_labels(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  const auto rows = parse_csv(text, "soft labels");
  if (rows.empty() || rows[0] != std::vector<std::string>{"id", "p1", "origin"}) {
    throw DataError("soft labels: header must be 'id,p1,origin'");
  }
  std::vector<SoftLabelRecord> out;
  std::unordered_set<std::uint32_t> ids;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 3) throw DataError("soft labels: line " + std::to_string(i + 1) + " malformed");
    SoftLabelRecord r;
    r.id = parse_int<std::uint32_t>(f[0], "soft-label id");
    r.p1 = parse_double(f[1], "soft-label p1");
    if (!(r.p1 >= 0.0 && r.p1 <= 1.0)) throw DataError("soft labels: p1 outside [0, 1]");
    r.p0 = 1.0 - r.p1;
    r.origin = parse_origin(f[2]);
    if (!ids.insert(r.id).second) throw DataError("soft labels: duplicate id " + f[0]);
    out.push_back(r);
  }
  return out;
}

void write_soft_labels(const std::filesystem::path& path,
                       std::span<const SoftLabelRecord> records) {
  write_text_file(path, format_soft_labels(records));
}

std::vector<SoftLabelRecord> read_soft_labels(const std::filesystem::path& path) {
  return parse_soft_labels(read_text_file(path));
}

}  // namespace kdlite
