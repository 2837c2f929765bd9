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

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <regex>
#include <string>

#include <json.hpp>

#include "kdlite/dataset.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(KDLITE_CLI_PATH) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return o;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), root).string()] = kdlite::read_text_file(e.path());
    }
  }
  return files;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("kdlite_cli_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string out() const { return "--out " + dir_.string() + " -q"; }
  fs::path at(const std::string& name) const { return dir_ / name; }

  // 60 rendered images at 96 px, split tags train/test.
  fs::path small_dataset() {
    const auto r = run("synth-data --n 60 --seed 3 --run-name data " + out());
    EXPECT_EQ(r.code, 0);
    return at("data/manifest.csv");
  }

  std::string quick(const fs::path& manifest) const {
    return "--manifest " + manifest.string() +
           " --profile reduced --epochs 1 --batch-size 16 --deterministic " + out();
  }

  fs::path dir_;
};

TEST_F(Cli, SynthDataClassBalanceAndSplit) {
  ASSERT_EQ(run("synth-data --n 1000 --descriptors --run-name d " + out()).code, 0);
  const auto m = kdlite::read_manifest(at("d/manifest.csv"));
  ASSERT_EQ(m.rows.size(), 1000u);
  EXPECT_EQ(m.positives(), 410u);
  std::size_t test = 0;
  for (const auto& r : m.rows) test += r.split == "test";
  EXPECT_EQ(test, 83u);
}

TEST_F(Cli, SynthDataIsByteReproducible) {
  ASSERT_EQ(run("synth-data --n 30 --seed 9 --run-name a " + out()).code, 0);
  ASSERT_EQ(run("synth-data --n 30 --seed 9 --run-name b " + out()).code, 0);
  const auto a = tree(at("a")), b = tree(at("b"));
  EXPECT_EQ(a.size(), 32u);  // 30 images, manifest, stamp
  EXPECT_EQ(a, b);
}

TEST_F(Cli, DefaultRunDirectoryIsDeterministic) {
  const auto r1 = run("synth-data --n 20 --descriptors " + out());
  const auto r2 = run("synth-data --n 20 --descriptors " + out());
  ASSERT_EQ(r1.code, 0);
  EXPECT_EQ(r1.out, r2.out);
  EXPECT_NE(r1.out.find("synth-data-s0-"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("synth-data --n 1 " + out()).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --bogus").code, 2);
  EXPECT_EQ(run("train --manifest x.csv --strategy at " + out()).code, 2);
  kdlite::write_text_file(at("bad.cfg"), "no_such_key = 1\n");
  EXPECT_EQ(run("train --manifest x.csv --config " + at("bad.cfg").string() + " " + out()).code, 2);
}

TEST_F(Cli, TrainWritesArtifacts) {
  const auto m = small_dataset();
  const auto r = run("train --run-name t " + quick(m));
  ASSERT_EQ(r.code, 0);
  for (const char* f : {"model.lcnn", "history.csv", "config.txt", "stamp.json"}) {
    EXPECT_TRUE(fs::exists(at(std::string("t/") + f))) << f;
  }
  const auto config = kdlite::read_text_file(at("t/config.txt"));
  EXPECT_NE(config.find("learning_rate = 0.001"), std::string::npos);
  EXPECT_NE(config.find("beta2 = 2"), std::string::npos);
  EXPECT_NE(config.find("temperature = 5"), std::string::npos);
  const auto stamp = nlohmann::json::parse(kdlite::read_text_file(at("t/stamp.json")));
  EXPECT_EQ(stamp["seed"], 0);
  EXPECT_EQ(stamp["config_digest"].get<std::string>().size(), 16u);
  EXPECT_TRUE(stamp["versions"].contains("lcnn_format"));
}

TEST_F(Cli, DeterministicTrainingRepeats) {
  const auto m = small_dataset();
  ASSERT_EQ(run("train --run-name a --seed 4 " + quick(m)).code, 0);
  ASSERT_EQ(run("train --run-name b --seed 4 " + quick(m)).code, 0);
  EXPECT_EQ(tree(at("a")), tree(at("b")));
}

TEST_F(Cli, MissingTeacherIsReported) {
  const auto m = small_dataset();
  const auto r = run("train --strategy at --teacher " + at("none.lcnn").string() + " " + quick(m));
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(fs::exists(at("none.lcnn")));
}

TEST_F(Cli, DistillEvaluatePredict) {
  const auto m = small_dataset();
  ASSERT_EQ(run("train --arch teacher --run-name teacher " + quick(m)).code, 0);
  ASSERT_EQ(run("distill --run-name d --teacher " + at("teacher/model.lcnn").string() + " " +
                quick(m))
                .code,
            0);
  std::size_t top_level = 0;
  for (const auto& e : fs::directory_iterator(at("d"))) {
    const auto ext = e.path().extension();
    top_level += ext == ".lcnn" || ext == ".csv";
  }
  EXPECT_EQ(top_level, 3u);
  EXPECT_TRUE(fs::exists(at("d/student1.lcnn")));
  EXPECT_TRUE(fs::exists(at("d/student2.lcnn")));
  EXPECT_EQ(kdlite::read_soft_labels(at("d/soft_labels.csv")).size(), 55u);

  const auto model = at("d/student2.lcnn").string();
  const auto ev = run("evaluate --run-name e --model " + model + " --manifest " + m.string() +
                      " --export-atmap " + at("maps.atmap").string() + " " + out());
  ASSERT_EQ(ev.code, 0);
  EXPECT_NE(ev.out.find("ROC-AUC"), std::string::npos);
  const auto report = nlohmann::json::parse(kdlite::read_text_file(at("e/report.json")));
  for (const char* key : {"accuracy", "roc_auc", "pr_auc", "samples", "threshold", "confusion"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  EXPECT_EQ(report["samples"], 5);
  EXPECT_EQ(kdlite::read_attention_file(at("maps.atmap")).size(), 5u);
  EXPECT_EQ(kdlite::read_text_file(at("e/confusion.csv")).substr(0, 6), "actual");

  const auto image = at("data/images/000000.ppm").string();
  const auto p1 = run("predict --model " + model + " " + image);
  const auto p2 = run("predict --model " + model + " " + image);
  ASSERT_EQ(p1.code, 0);
  EXPECT_EQ(p1.out, p2.out);
  EXPECT_TRUE(std::regex_search(p1.out, std::regex("\t[01]\\.\\d{4}\t[01]\n$"))) << p1.out;
  EXPECT_EQ(run("predict --model " + model + " " + m.string()).code, 3);
  EXPECT_EQ(run("predict --model " + m.string() + " " + image).code, 3);
}

TEST_F(Cli, TrainFromAttentionFile) {
  const auto m = small_dataset();
  ASSERT_EQ(run("train --arch teacher --run-name teacher " + quick(m)).code, 0);
  ASSERT_EQ(run("evaluate --split all --run-name e --model " + at("teacher/model.lcnn").string() +
                " --manifest " + m.string() + " --export-atmap " + at("t.atmap").string() + " " +
                out())
                .code,
            0);
  const std::string base = "train --strategy at --teacher " + at("t.atmap").string() + " ";
  EXPECT_EQ(run(base + "--no-augment --run-name s " + quick(m)).code, 0);
  EXPECT_TRUE(fs::exists(at("s/model.lcnn")));
  // Precomputed maps cannot follow augmented inputs.
  EXPECT_EQ(run(base + quick(m)).code, 2);
}

TEST_F(Cli, FoldSummary) {
  const auto m = small_dataset();
  const auto r = run("train --folds 3 --run-name f " + quick(m));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("+-"), std::string::npos);
  const auto folds = nlohmann::json::parse(kdlite::read_text_file(at("f/folds.json")));
  EXPECT_FALSE(folds.empty());
}

TEST_F(Cli, SelfcheckPasses) {
  const auto r = run("selfcheck");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("5350633"), std::string::npos);
  EXPECT_NE(r.out.find("selfcheck: PASS"), std::string::npos);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seeds 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --filter no_such_case").code, 2);
}

}  // namespace
