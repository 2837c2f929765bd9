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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <png.h>

#include "kdlite/dataset.hpp"
#include "kdlite/errors.hpp"
#include "kdlite/metrics.hpp"

namespace kdlite {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> bytes_of(std::string_view header, std::vector<std::uint8_t> body = {}) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("kdlite_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// --- decoding -----------------------------------------------------------------

TEST(DecodeImage, BinaryPpm) {
  const auto file = bytes_of("P6\n# two by two\n2 2\n255\n",
                             {255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 204});
  const ImageRecord img = decode_image(file, "rgb.ppm");
  ASSERT_EQ(img.height, 2u);
  ASSERT_EQ(img.width, 2u);
  EXPECT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_EQ(img.at(1, 0, 0), 0.0f);
  EXPECT_EQ(img.at(1, 0, 1), 1.0f);
  EXPECT_EQ(img.at(2, 1, 0), 1.0f);
  EXPECT_EQ(img.at(0, 1, 1), static_cast<float>(51 / 255.0));
  EXPECT_EQ(img.at(1, 1, 1), static_cast<float>(102 / 255.0));
  EXPECT_EQ(img.at(2, 1, 1), static_cast<float>(204 / 255.0));
  EXPECT_EQ(img.source, "rgb.ppm");
}

TEST(DecodeImage, AsciiAndGrayVariants) {
  const ImageRecord p3 = decode_image(bytes_of("P3 1 1 15 15 0 5\n"));
  EXPECT_EQ(p3.at(0, 0, 0), 1.0f);
  EXPECT_EQ(p3.at(2, 0, 0), static_cast<float>(5 / 15.0));
  const ImageRecord p2 = decode_image(bytes_of("P2\n2 1\n4\n0 4\n"));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(p2.at(c, 0, 0), 0.0f);
    EXPECT_EQ(p2.at(c, 0, 1), 1.0f);
  }
  const ImageRecord p5 = decode_image(bytes_of("P5 1 1 255\n", {128}));
  EXPECT_EQ(p5.at(0, 0, 0), p5.at(2, 0, 0));
  const ImageRecord wide = decode_image(bytes_of("P5 1 1 65535\n", {0x80, 0x00}));
  EXPECT_EQ(wide.at(1, 0, 0), static_cast<float>(32768.0 / 65535.0));
}

std::vector<std::uint8_t> encode_png(const std::vector<std::uint8_t>& pixels, std::uint32_t w,
                                     std::uint32_t h, std::uint32_t format) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = format;
  png_alloc_size_t size = 0;
  EXPECT_TRUE(png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr));
  std::vector<std::uint8_t> out(size);
  EXPECT_TRUE(png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr));
  out.resize(size);
  return out;
}

TEST(DecodeImage, GrayscalePngBroadcasts) {
  const auto png = encode_png({0, 64, 128, 255}, 2, 2, PNG_FORMAT_GRAY);
  const ImageRecord img = decode_image(png);
  ASSERT_EQ(img.width, 2u);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) {
      EXPECT_EQ(img.at(0, y, x), img.at(1, y, x));
      EXPECT_EQ(img.at(0, y, x), img.at(2, y, x));
    }
  EXPECT_EQ(img.at(0, 1, 1), 1.0f);
  EXPECT_EQ(img.at(0, 0, 1), static_cast<float>(64 / 255.0));
}

TEST(DecodeImage, RgbaPngDropsAlpha) {
  const auto png = encode_png({10, 20, 30, 0}, 1, 1, PNG_FORMAT_RGBA);
  const ImageRecord img = decode_image(png);
  EXPECT_EQ(img.at(0, 0, 0), static_cast<float>(10 / 255.0));
  EXPECT_EQ(img.at(2, 0, 0), static_cast<float>(30 / 255.0));
}

TEST(DecodeImage, TruncatedAndUnknownInputsFail) {
  EXPECT_THROW(decode_image(bytes_of("P6\n4 4\n255\n", {1, 2, 3})), DataError);
  EXPECT_THROW(decode_image(bytes_of("P6\n4")), DataError);
  auto png = encode_png(std::vector<std::uint8_t>(3 * 16 * 16, 7), 16, 16, PNG_FORMAT_RGB);
  png.resize(png.size() / 2);
  EXPECT_THROW(decode_image(png), DataError);
  EXPECT_THROW(decode_image(bytes_of("hello world")), DataError);
  EXPECT_THROW(decode_image(bytes_of("")), DataError);
}

TEST(DecodeImage, PpmRoundTrip) {
  TempDir dir;
  const ImageRecord img = render_synthetic(1, 2, 1, 24);
  save_ppm(dir.path() / "a.ppm", img);
  const ImageRecord back = load_image(dir.path() / "a.ppm");
  EXPECT_EQ(back.pixels, img.pixels);  // synthetic values are already k / 255
  EXPECT_THROW(load_image(dir.path() / "missing.ppm"), DataError);
}

// --- resize -------------------------------------------------------------------

ImageRecord gray(std::size_t h, std::size_t w, std::vector<float> plane) {
  ImageRecord r;
  r.height = h;
  r.width = w;
  for (int c = 0; c < 3; ++c) r.pixels.insert(r.pixels.end(), plane.begin(), plane.end());
  return r;
}

TEST(Resize, SameSizeIsIdentity) {
  const ImageRecord img = render_synthetic(3, 4, 0, 20);
  const ImageRecord out = resize(img, 20, 20);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], img.pixels[i], 1e-6);
}

TEST(Resize, ConstantImage) {
  const ImageRecord out = resize(gray(5, 7, std::vector<float>(35, 0.3f)), 11, 3);
  for (float v : out.pixels) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Resize, CheckerboardGrid) {
  // Output pixel centres map to source coordinates 0, 0.25, 0.75, 1 on each
  // axis (the outer two clamped).
  const ImageRecord out = resize(gray(2, 2, {1, 0, 0, 1}), 4, 4);
  const float expected[4][4] = {{1.0f, 0.75f, 0.25f, 0.0f},
                                {0.75f, 0.625f, 0.375f, 0.25f},
                                {0.25f, 0.375f, 0.625f, 0.75f},
                                {0.0f, 0.25f, 0.75f, 1.0f}};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(out.at(c, y, x), expected[y][x], 1e-6);
}

// --- manifests ----------------------------------------------------------------

TEST(Manifest, RoundTripWithQuoting) {
  DatasetManifest m;
  m.rows = {{0, "images/a.png", 1, "train"},
            {7, "odd, \"name\".ppm", 0, ""},
            {3, synthetic_descriptor(1, 3, 0, 32), 0, "test"}};
  const std::string text = format_manifest(m);
  EXPECT_EQ(text.substr(0, text.find('\n')), "id,source,label,split");
  const DatasetManifest back = parse_manifest(text);
  ASSERT_EQ(back.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.rows[i].id, m.rows[i].id);
    EXPECT_EQ(back.rows[i].source, m.rows[i].source);
    EXPECT_EQ(back.rows[i].label, m.rows[i].label);
    EXPECT_EQ(back.rows[i].split, m.rows[i].split);
  }
  EXPECT_EQ(format_manifest(back), text);
  EXPECT_EQ(m.positives(), 1u);
}

TEST(Manifest, OptionalSplitColumnAndBom) {
  const auto m = parse_manifest("\xEF\xBB\xBFid,source,label\n1,a.png,1\n2,b.png,0\n");
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_EQ(m.rows[1].source, "b.png");
  EXPECT_TRUE(m.rows[1].split.empty());
}

TEST(Manifest, Rejections) {
  EXPECT_THROW(parse_manifest(""), DataError);
  EXPECT_THROW(parse_manifest("name,label\n"), DataError);
  EXPECT_THROW(parse_manifest("id,source,label,split\n1,a,2,\n"), DataError);
  EXPECT_THROW(parse_manifest("id,source,label,split\n1,a,1,\n1,b,0,\n"), DataError);
  EXPECT_THROW(parse_manifest("id,source,label,split\nx,a,1,\n"), DataError);
  EXPECT_THROW(parse_manifest("id,source,label,split\n1,\"a,1,\n"), DataError);
}

TEST(LoadDataset, FilesAndDescriptorsResized) {
  TempDir dir;
  save_ppm(dir.path() / "x.ppm", gray(4, 4, std::vector<float>(16, 0.2f)));
  DatasetManifest m;
  m.rows = {{10, "x.ppm", 1, "train"}, {11, synthetic_descriptor(5, 11, 0, 32), 0, "test"}};
  write_manifest(dir.path() / "m.csv", m);
  const ImageSet set = load_dataset(read_manifest(dir.path() / "m.csv"), dir.path(), 16, 16);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.ids, (std::vector<std::uint32_t>{10, 11}));
  EXPECT_EQ(set.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(set.splits[1], "test");
  for (float v : set.sample(0)) EXPECT_NEAR(v, 0.2f, 1e-6);
  for (float v : set.pixels) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  const ImageSet sub = set.subset(std::vector<std::size_t>{1});
  EXPECT_EQ(sub.ids, (std::vector<std::uint32_t>{11}));
  EXPECT_EQ(sub.pixels.size(), sub.sample_size());
}

// --- synthetic data -------------------------------------------------------------

TEST(Synthetic, PositiveCounts) {
  EXPECT_EQ(generate_synthetic_dataset(100, 0.41, 16, 1).manifest.positives(), 41u);
  EXPECT_EQ(generate_synthetic_dataset(1000, 0.41, 8, 7).manifest.positives(), 410u);
  EXPECT_THROW(generate_synthetic_dataset(1, 0.41, 16, 1), ConfigError);
  EXPECT_THROW(generate_synthetic_dataset(3, 0.01, 16, 1), ConfigError);
  EXPECT_THROW(generate_synthetic_dataset(10, 0.41, 4, 1), ConfigError);
}

TEST(Synthetic, PureFunctionOfArguments) {
  const auto a = generate_synthetic_dataset(20, 0.41, 32, 9);
  const auto b = generate_synthetic_dataset(20, 0.41, 32, 9);
  const auto c = generate_synthetic_dataset(20, 0.41, 32, 10);
  EXPECT_EQ(a.images.pixels, b.images.pixels);
  EXPECT_EQ(a.images.labels, b.images.labels);
  EXPECT_EQ(format_manifest(a.manifest), format_manifest(b.manifest));
  EXPECT_NE(a.images.pixels, c.images.pixels);
}

TEST(Synthetic, DescriptorRendersSameImage) {
  const auto set = generate_synthetic_dataset(6, 0.5, 24, 4);
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    const ImageRecord r = render_descriptor(set.manifest.rows[i].source);
    EXPECT_TRUE(std::equal(r.pixels.begin(), r.pixels.end(), set.images.sample(i).begin()));
  }
  EXPECT_THROW(render_descriptor("synth:1:2"), DataError);
  EXPECT_FALSE(is_synthetic_descriptor("a.png"));
}

TEST(Synthetic, ValuesAreQuantizedAndInRange) {
  const ImageRecord r = render_synthetic(2, 3, 1, 40);
  for (float v : r.pixels) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    const float k = std::round(v * 255.0f);
    ASSERT_EQ(v, k / 255.0f);
  }
}

TEST(Synthetic, MeanIntensityDoesNotSeparateClasses) {
  const auto set = generate_synthetic_dataset(1000, 0.41, 96, 2024);
  std::vector<ScoredSample> scored;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    double s = 0;
    for (float v : set.images.sample(i)) s += v;
    scored.push_back({set.images.ids[i], s / set.images.sample_size(), set.images.labels[i]});
  }
  const double auc = roc_auc(scored);
  EXPECT_LT(std::max(auc, 1.0 - auc), 0.7) << auc;
}

// --- ATMAP ----------------------------------------------------------------------

std::vector<AttentionRecord> random_records(std::size_t n, std::uint16_t h, std::uint16_t w,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<AttentionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    AttentionRecord r{static_cast<std::uint32_t>(1000 + 3 * i), static_cast<float>(standard_normal(rng)), h, w, {}};
    for (std::size_t k = 0; k < std::size_t(h) * w; ++k) r.values.push_back(static_cast<float>(uniform(rng, 0, 9)));
    out.push_back(std::move(r));
  }
  return out;
}

TEST(Atmap, RoundTripIsBitExact) {
  TempDir dir;
  const auto recs = random_records(5, 6, 4, 1);
  write_attention_file(dir.path() / "t.atmap", recs);
  const auto back = read_attention_file(dir.path() / "t.atmap");
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(std::memcmp(&back[i].logit, &recs[i].logit, 4), 0);
    EXPECT_EQ(back[i].height, 6);
    EXPECT_EQ(back[i].width, 4);
    EXPECT_EQ(std::memcmp(back[i].values.data(), recs[i].values.data(), 4 * 24), 0);
  }
}

TEST(Atmap, Layout) {
  const auto recs = random_records(2, 2, 3, 2);
  const auto bytes = encode_attention_file(recs);
  EXPECT_EQ(bytes.size(), 4u + 2 + 4 + 2 * (4 + 4 + 2 + 2 + 6 * 4) + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ATMP");
  EXPECT_EQ(bytes[4], kAtmapVersion);
  EXPECT_EQ(bytes[6], 2);
  std::uint32_t id;
  std::memcpy(&id, bytes.data() + 10, 4);
  EXPECT_EQ(id, recs[0].id);
}

TEST(Atmap, InconsistentRecordsAreRefused) {
  auto recs = random_records(3, 4, 4, 3);
  recs[1] = random_records(1, 3, 3, 4)[0];
  recs[1].id = 5;
  EXPECT_THROW(encode_attention_file(recs), ContractError);
  recs = random_records(2, 4, 4, 3);
  recs[0].values.pop_back();
  EXPECT_THROW(encode_attention_file(recs), ContractError);
  recs = random_records(2, 4, 4, 3);
  recs[1].id = recs[0].id;
  EXPECT_THROW(encode_attention_file(recs), ContractError);
}

TEST(Atmap, CorruptionIsDetected) {
  const auto bytes = encode_attention_file(random_records(3, 4, 4, 5));
  auto flipped = bytes;
  flipped[20] ^= 0x10;
  EXPECT_THROW(decode_attention_file(flipped), DataError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_THROW(decode_attention_file(truncated), DataError);
  auto magic = bytes;
  magic[0] = 'B';
  EXPECT_THROW(decode_attention_file(magic), DataError);
  auto version = bytes;
  version[4] = kAtmapVersion + 1;
  EXPECT_THROW(decode_attention_file(version), VersionError);
}

// --- soft-label sidecar ---------------------------------------------------------

TEST(SoftLabelFile, RoundTripsDoublesExactly) {
  TempDir dir;
  std::vector<SoftLabelRecord> recs = {
      make_soft_label(3, 1, 5.0, 5.0), make_soft_label(8, 1, -3.0, 5.0),
      make_soft_label(9, 0, -0.123456789, 5.0)};
  write_soft_labels(dir.path() / "s.csv", recs);
  const auto back = read_soft_labels(dir.path() / "s.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].p1, recs[i].p1);
    EXPECT_EQ(back[i].p0 + back[i].p1, 1.0);
    EXPECT_EQ(back[i].origin, recs[i].origin);
  }
  EXPECT_EQ(read_text_file(dir.path() / "s.csv").substr(0, 15), "id,p1,origin\n3,");
}

TEST(SoftLabelFile, Rejections) {
  EXPECT_THROW(parse_soft_labels("id,p,origin\n"), DataError);
  EXPECT_THROW(parse_soft_labels("id,p1,origin\n1,1.5,softened\n"), DataError);
  EXPECT_THROW(parse_soft_labels("id,p1,origin\n1,0.5,softened\n1,0.5,softened\n"), DataError);
  EXPECT_THROW(parse_soft_labels("id,p1,origin\n1,0.5,maybe\n"), DataError);
}

}  // namespace
}  // namespace kdlite
