// Copyright 2026 The diffqa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cli.hpp"
#include "diffqa/csv.hpp"
#include "test_util.hpp"

namespace diffqa {
namespace {

namespace fs = std::filesystem;

int cli(std::vector<std::string> args) { return cli::run(args); }

std::string bytes(const fs::path& p) { return read_file(p); }

// A small toy dataset shared by the command tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const auto d = testing::fresh_dir("cli_dataset");
    EXPECT_EQ(cli({"toy-dataset", "--out", d.string(), "--set", "identities=25", "--set", "samples_per_identity=4",
                   "--seed", "3"}),
              0);
    return d;
  }();
  return dir;
}

const fs::path& checkpoint() {
  static const fs::path path = [] {
    const auto d = testing::fresh_dir("cli_train");
    EXPECT_EQ(cli({"train", "--out", d.string(), "--set", "dataset=" + dataset().string(), "--set", "epochs=2",
                   "--set", "lr=0.002", "--set", "base_channels=8"}),
              0);
    return d / "denoiser.bin";
  }();
  return path;
}

TEST(Cli, ToyDatasetIsByteReproducible) {
  const auto a = testing::fresh_dir("cli_toy_a"), b = testing::fresh_dir("cli_toy_b");
  for (const auto& d : {a, b}) {
    ASSERT_EQ(cli({"toy-dataset", "--out", d.string(), "--set", "identities=4", "--set", "severity=true"}), 0);
  }
  EXPECT_EQ(bytes(a / "manifest.csv"), bytes(b / "manifest.csv"));
  EXPECT_EQ(bytes(a / "pairs.csv"), bytes(b / "pairs.csv"));
  const CsvTable m = read_csv(a / "manifest.csv");
  ASSERT_EQ(m.rows.size(), 16u);
  for (const auto& r : m.rows) EXPECT_EQ(bytes(a / r[0]), bytes(b / r[0])) << r[0];
}

TEST(Cli, ResumedTrainingMatchesUninterruptedRun) {
  const auto whole = testing::fresh_dir("cli_whole"), split = testing::fresh_dir("cli_split");
  const std::vector<std::string> common = {"--set", "dataset=" + dataset().string(), "--set", "lr=0.002",
                                           "--set", "base_channels=8"};
  auto args = [&](const fs::path& out, int epochs) {
    std::vector<std::string> a = {"train", "--out", out.string(), "--set", "epochs=" + std::to_string(epochs)};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  ASSERT_EQ(cli(args(whole, 3)), 0);
  ASSERT_EQ(cli(args(split, 2)), 0);
  auto resume = args(split, 3);
  resume.insert(resume.end(), {"--set", "resume=" + (split / "denoiser.bin").string()});
  ASSERT_EQ(cli(resume), 0);
  EXPECT_EQ(bytes(whole / "loss.csv"), bytes(split / "loss.csv"));
  EXPECT_EQ(read_csv(split / "loss.csv").rows.size(), 3u);
}

TEST(Cli, ZeroLearningRateWarns) {
  const auto d = testing::fresh_dir("cli_lr0");
  ::testing::internal::CaptureStderr();
  const int code = cli({"train", "--out", d.string(), "--set", "dataset=" + dataset().string(), "--set", "epochs=1",
                        "--set", "lr=0", "--set", "base_channels=8"});
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_EQ(code, 0);
  EXPECT_NE(err.find("warning: lr=0"), std::string::npos);
}

TEST(Cli, ScoresHundredImagesWithoutNaN) {
  const auto d = testing::fresh_dir("cli_score");
  ASSERT_EQ(cli({"score", "--out", d.string(), "--set", "dataset=" + dataset().string(), "--set",
                 "checkpoint=" + checkpoint().string()}),
            0);
  const CsvTable q = read_csv(d / "qualities.csv");
  ASSERT_EQ(q.rows.size(), 100u);
  for (std::size_t r = 0; r < q.rows.size(); ++r) {
    const double v = parse_real(q.rows[r][1], "qualities", q.line_numbers[r]);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(std::abs(v), 1.0);
  }
  EXPECT_TRUE(read_csv(d / "errors.csv").rows.empty());
}

TEST(Cli, EchoedConfigReproducesRun) {
  const auto a = testing::fresh_dir("cli_echo_a"), b = testing::fresh_dir("cli_echo_b");
  ASSERT_EQ(cli({"score", "--out", a.string(), "--set", "dataset=" + dataset().string(), "--set",
                 "checkpoint=" + checkpoint().string(), "--set", "n=3", "--seed", "12"}),
            0);
  ASSERT_EQ(cli({"score", "--out", b.string(), "--config", (a / "config.txt").string()}), 0);
  EXPECT_EQ(bytes(a / "qualities.csv"), bytes(b / "qualities.csv"));
  EXPECT_EQ(bytes(a / "config.txt"), bytes(b / "config.txt"));
}

TEST(Cli, FailedImagesGoToSidecarAndExitNonzero) {
  const auto d = testing::fresh_dir("cli_fail");
  const auto list = d / "list.csv";
  write_file(list, "path\n" + (dataset() / "images" / "id0000_000.pgm").string() + "\n" + (d / "missing.pgm").string() +
                       "\n");
  EXPECT_EQ(cli({"score", "--out", (d / "out").string(), "--set", "dataset=" + list.string(), "--set",
                 "checkpoint=" + checkpoint().string(), "--set", "n=2"}),
            1);
  const CsvTable q = read_csv(d / "out" / "qualities.csv");
  const CsvTable e = read_csv(d / "out" / "errors.csv");
  EXPECT_EQ(q.rows.size(), 1u);
  ASSERT_EQ(e.rows.size(), 1u);
  EXPECT_NE(e.rows[0][0].find("missing.pgm"), std::string::npos);
}

TEST(Cli, RejectsBadInvocations) {
  const auto d = testing::fresh_dir("cli_bad");
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(cli({"score", "--out", d.string(), "--set", "bogus=1"}), 2);
  EXPECT_EQ(cli({"train", "--out", d.string(), "--set", "dataset=" + (d / "absent").string()}), 2);
  EXPECT_EQ(cli({"train", "--out", d.string(), "--set", "dataset=" + dataset().string(), "--set", "resume=" +
                 (d / "absent.bin").string()}),
            2);
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("unknown config key 'bogus'"), std::string::npos);
  EXPECT_NE(err.find("dataset not found"), std::string::npos);
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  EXPECT_EQ(cli({"frobnicate"}), 2);
  EXPECT_EQ(cli({"score"}), 2);
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();
}

TEST(Cli, EmbedThenEdcWritesReports) {
  const auto d = testing::fresh_dir("cli_edc");
  ASSERT_EQ(cli({"embed", "--out", (d / "emb").string(), "--set", "dataset=" + dataset().string()}), 0);
  ASSERT_EQ(cli({"score", "--out", (d / "q").string(), "--set", "dataset=" + dataset().string(), "--set",
                 "checkpoint=" + checkpoint().string(), "--set", "n=2"}),
            0);
  // Paths in the quality file are relative to the dataset, as are the pair references.
  ASSERT_EQ(cli({"edc", "--out", (d / "edc").string(), "--set", "pairs=" + (dataset() / "pairs.csv").string(), "--set",
                 "embeddings=" + (d / "emb" / "embeddings.csv").string(), "--set",
                 "methods=diffqa=" + (d / "q" / "qualities.csv").string(), "--set", "fmr=0.05", "--set",
                 "discard_limits=0.2,0.3"}),
            0);
  EXPECT_TRUE(fs::exists(d / "edc" / "edc_diffqa.csv"));
  EXPECT_TRUE(fs::exists(d / "edc" / "edc.svg"));
  EXPECT_EQ(read_csv(d / "edc" / "pauc.csv").rows.size(), 2u);
}

TEST(Cli, DistillWritesLabelsRegressorAndFidelity) {
  const auto d = testing::fresh_dir("cli_distill");
  ASSERT_EQ(cli({"distill", "--out", d.string(), "--set", "dataset=" + dataset().string(), "--set",
                 "checkpoint=" + checkpoint().string(), "--set", "n=2", "--set", "epochs=5"}),
            0);
  EXPECT_EQ(read_csv(d / "labels.csv").rows.size(), 100u);
  EXPECT_EQ(read_csv(d / "fidelity.csv").rows.size(), 1u);
  const auto s = testing::fresh_dir("cli_distilled_score");
  ASSERT_EQ(cli({"score", "--out", s.string(), "--set", "dataset=" + dataset().string(), "--set",
                 "regressor=" + (d / "regressor.bin").string()}),
            0);
  EXPECT_EQ(read_csv(s / "qualities.csv").rows.size(), 100u);
}

}  // namespace
}  // namespace diffqa
