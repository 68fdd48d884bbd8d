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
#include <limits>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/eval.hpp"
#include "edc_oracle.hpp"
#include "test_util.hpp"

namespace diffqa {
namespace {

TEST(Threshold, ThreeScoreExample) {
  const std::vector<double> s{0.1, 0.5, 0.9};
  const auto t = solve_threshold(s, 0.34);
  EXPECT_EQ(t.tau, 0.9);
  EXPECT_NEAR(t.achieved_fmr, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(solve_threshold(s, 0.67).tau, 0.5);
}

TEST(Threshold, TiesSitJustAboveTheBlockingScore) {
  const std::vector<double> s(7, 0.42);
  for (double f : {0.01, 0.5, 0.99}) {
    const auto t = solve_threshold(s, f);
    EXPECT_EQ(t.tau, std::nextafter(0.42, 1.0));
    EXPECT_EQ(t.achieved_fmr, 0.0);
  }
  const std::vector<double> distinct{0.1, 0.2, 0.3};
  EXPECT_EQ(solve_threshold(distinct, 0.1).tau, std::nextafter(0.3, 1.0));
}

TEST(Threshold, RejectsInvalidInput) {
  const std::vector<double> s{0.1};
  EXPECT_THROW(solve_threshold(s, 1.0), ContractError);
  EXPECT_THROW(solve_threshold(s, 0.0), ContractError);
  EXPECT_THROW(solve_threshold(std::vector<double>{}, 0.1), ContractError);
}

TEST(Threshold, ExhaustiveCorrectnessOnSmallSets) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> s;
    const std::size_t n = 1 + rng.uniform_int(0, 20);
    for (std::size_t i = 0; i < n; ++i) s.push_back(std::round(rng.uniform(0, 1) * 8) / 8);
    const double fmr = rng.uniform(0.01, 0.99);
    const auto t = solve_threshold(s, fmr);
    EXPECT_EQ(t.tau, testing::brute_force_threshold(s, fmr));
    std::size_t above = 0;
    for (double v : s) above += v >= t.tau;
    EXPECT_LE(static_cast<double>(above) / n, fmr + 1e-12);
    EXPECT_EQ(t.achieved_fmr, static_cast<double>(above) / n);
    // The next distinct score below tau breaks the target.
    double next = -std::numeric_limits<double>::infinity();
    for (double v : s)
      if (v < t.tau) next = std::max(next, v);
    if (std::isfinite(next)) {
      std::size_t more = 0;
      for (double v : s) more += v >= next;
      EXPECT_GT(static_cast<double>(more) / n, fmr);
    }
  }
}

TEST(Edc, AllAboveThresholdIsZero) {
  const std::vector<double> scores{0.6, 0.7, 0.8}, q{0.3, 0.1, 0.2};
  const auto c = edc_curve(scores, q, 0.5, 1.0);
  for (const auto& p : c.points) EXPECT_EQ(p.fnmr, 0.0);
  EXPECT_FALSE(pauc(c, 0.3).normalized_defined);
  EXPECT_EQ(pauc(c, 0.3).raw, 0.0);
}

TEST(Edc, FourPairHandExample) {
  const std::vector<double> scores{0.2, 0.9, 0.9, 0.9}, q{0.1, 0.5, 0.6, 0.7};
  const auto c = edc_curve(scores, q, 0.5, 0.3);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[0], (EdcPoint{0.0, 0.25, 4}));
  EXPECT_EQ(c.points[1], (EdcPoint{0.25, 0.0, 3}));
  EXPECT_EQ(c.fnmr_at(0.1), 0.25);
  EXPECT_EQ(c.fnmr_at(0.25), 0.0);
  const auto p = pauc(c, 0.3);
  EXPECT_NEAR(p.raw, 0.25 * 0.25, 1e-15);
  EXPECT_NEAR(p.normalized, 0.25 * 0.25 / (0.3 * 0.25), 1e-15);
}

TEST(Edc, TiedQualitiesFormOneEvent) {
  const std::vector<double> scores{0.2, 0.1, 0.9, 0.9}, q{0.4, 0.4, 0.5, 0.6};
  const auto c = edc_curve(scores, q, 0.5, 1.0);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[1], (EdcPoint{0.5, 0.0, 2}));
  EXPECT_EQ(c.points[2], (EdcPoint{0.75, 0.0, 1}));
}

TEST(Edc, RejectsNoMatedPairs) {
  EXPECT_THROW(edc_curve(std::vector<double>{}, std::vector<double>{}, 0.5, 0.3), ContractError);
}

TEST(Edc, MatchesBruteForceOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(0, 1999);
    std::vector<double> scores, q;
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < m; ++i) {
      scores.push_back(rng.uniform(-1, 1));
      q.push_back(coarse ? std::floor(rng.uniform(0, 20)) : rng.uniform(0, 1));
    }
    const double tau = rng.uniform(-0.5, 0.5), limit = rng.uniform(0.05, 1.0);
    const auto fast = edc_curve(scores, q, tau, limit);
    const auto slow = testing::brute_force_edc(scores, q, tau, limit);
    ASSERT_EQ(fast.points, slow.points) << "trial " << trial;
    EXPECT_EQ(fast.fnmr_at_zero, slow.fnmr_at_zero);
    for (std::size_t k = 1; k < fast.points.size(); ++k) {
      EXPECT_GT(fast.points[k].discard_fraction, fast.points[k - 1].discard_fraction);
      EXPECT_LE(fast.points[k].surviving, fast.points[k - 1].surviving);
    }
    const double l = rng.uniform(0.01, limit);
    EXPECT_DOUBLE_EQ(pauc(fast, l).raw, testing::brute_force_pauc(slow, l));
  }
}

TEST(Pauc, ConstantCurveNormalizesToOne) {
  EdcCurve c;
  c.fnmr_at_zero = 0.3;
  c.points = {{0.0, 0.3, 10}, {0.1, 0.3, 9}, {0.2, 0.3, 8}};
  const auto p = pauc(c, 0.3);
  EXPECT_NEAR(p.raw, 0.09, 1e-15);
  EXPECT_NEAR(p.normalized, 1.0, 1e-15);
  EXPECT_TRUE(p.normalized_defined);
}

TEST(Pauc, ImmediateDropNormalizesToNearZero) {
  std::vector<double> scores(1000, 0.9), q;
  scores[0] = 0.1;
  for (std::size_t i = 0; i < scores.size(); ++i) q.push_back(static_cast<double>(i));
  const auto p = pauc(edc_curve(scores, q, 0.5, 0.3), 0.3);
  EXPECT_LT(p.normalized, 0.01);
}

TEST(Similarities, ExamplesAndMissingReference) {
  EmbeddingTable t;
  t.put("a", Embedding{{1, 0}});
  t.put("b", Embedding{{1, 0}});
  t.put("c", Embedding{{0, 2}});
  const PairList pairs{{"a", "b", true}, {"a", "c", false}};
  const auto s = compute_similarities(pairs, t);
  EXPECT_EQ(s.mated, std::vector<double>{1.0});
  EXPECT_EQ(s.nonmated, std::vector<double>{0.0});
  EXPECT_EQ(s.mated_pair, std::vector<std::size_t>{0});
  EXPECT_EQ(s.nonmated_pair, std::vector<std::size_t>{1});
  try {
    compute_similarities({{"a", "ghost.pgm", true}}, t);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost.pgm"), std::string::npos);
  }
}

TEST(Similarities, AllPairsMatchDirectRecomputation) {
  Rng rng(3);
  EmbeddingTable t;
  std::vector<std::string> refs;
  for (int i = 0; i < 200; ++i) {
    Embedding e;
    for (int k = 0; k < 8; ++k) e.values.push_back(rng.normal());
    refs.push_back("r" + std::to_string(i));
    t.put(refs.back(), e);
  }
  PairList pairs;
  for (int i = 0; i < 200; ++i)
    for (int j = i + 1; j < 200; ++j) pairs.push_back({refs[i], refs[j], (i / 4) == (j / 4)});
  const auto s = compute_similarities(pairs, t);
  std::size_t im = 0, in = 0;
  for (const auto& p : pairs) {
    const auto& a = t.at(p.a).values;
    const auto& b = t.at(p.b).values;
    double dot = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      dot += a[k] * b[k];
      na += a[k] * a[k];
      nb += b[k] * b[k];
    }
    const double v = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
    EXPECT_EQ(p.mated ? s.mated[im++] : s.nonmated[in++], v);
  }
}

TEST(PairQuality, IsMinimumOfTheTwoImages) {
  const PairList pairs{{"a", "b", true}, {"b", "c", true}};
  const std::map<std::string, double> q{{"a", 0.3}, {"b", 0.7}, {"c", 0.5}};
  const std::vector<std::size_t> idx{0, 1};
  EXPECT_EQ(pair_qualities(pairs, idx, q), (std::vector<double>{0.3, 0.5}));
  EXPECT_THROW(pair_qualities(pairs, idx, {{"a", 0.1}}), ContractError);
}

class Protocol : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::fresh_dir("protocol");
    Rng rng(4);
    EmbeddingTable emb;
    PairList pairs;
    std::map<std::string, double> q1, q2;
    for (int id = 0; id < 40; ++id) {
      std::vector<double> center(6);
      for (auto& v : center) v = rng.normal();
      for (int s = 0; s < 3; ++s) {
        Embedding e;
        const double noise = rng.uniform(0.1, 1.5);
        for (double c : center) e.values.push_back(c + noise * rng.normal());
        const std::string ref = "id" + std::to_string(id) + "/" + std::to_string(s) + ".pgm";
        emb.put(ref, e);
        q2[ref] = rng.uniform(0, 1);
      }
    }
    const auto& all = emb.entries();
    std::vector<std::string> refs;
    for (const auto& [k, v] : all) refs.push_back(k);
    for (std::size_t i = 0; i < refs.size(); ++i)
      for (std::size_t j = i + 1; j < refs.size(); ++j)
        pairs.push_back({refs[i], refs[j], refs[i].substr(0, refs[i].find('/')) == refs[j].substr(0, refs[j].find('/'))});
    // Oracle quality: mean margin of an image's mated scores over the threshold.
    const auto sims = compute_similarities(pairs, emb);
    const double tau = solve_threshold(sims.nonmated, 1e-2).tau;
    std::map<std::string, std::pair<double, int>> margin;
    for (std::size_t k = 0; k < sims.mated.size(); ++k) {
      const auto& p = pairs[sims.mated_pair[k]];
      for (const auto& r : {p.a, p.b}) {
        margin[r].first += sims.mated[k] - tau;
        ++margin[r].second;
      }
    }
    for (const auto& [r, m] : margin) q1[r] = m.first / m.second;
    emb.save(dir_ / "emb.csv");
    save_pairs_csv(dir_ / "pairs.csv", pairs);
    auto write_q = [&](const std::string& name, const std::map<std::string, double>& q) {
      std::vector<std::vector<std::string>> rows;
      for (const auto& [k, v] : q) rows.push_back({k, format_real(v, 17)});
      write_csv(dir_ / name, {"path", "quality"}, rows);
    };
    write_q("q_oracle.csv", q1);
    write_q("q_random.csv", q2);
    cfg_.pairs = dir_ / "pairs.csv";
    cfg_.embeddings = dir_ / "emb.csv";
    cfg_.methods = {{"oracle", dir_ / "q_oracle.csv"}, {"random", dir_ / "q_random.csv"}};
    cfg_.fmr = 1e-2;
    cfg_.discard_limits = {0.2, 0.3};
    cfg_.svg = true;
  }
  std::filesystem::path dir_;
  ProtocolConfig cfg_;
};

TEST_F(Protocol, WritesOneCurvePerMethodAndOneTable) {
  cfg_.out_dir = dir_ / "out";
  std::filesystem::create_directories(cfg_.out_dir);
  const auto rep = run_protocol(cfg_);
  EXPECT_TRUE(std::filesystem::exists(cfg_.out_dir / "edc_oracle.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg_.out_dir / "edc_random.csv"));
  EXPECT_TRUE(std::filesystem::exists(cfg_.out_dir / "edc.svg"));
  const auto table = read_csv(cfg_.out_dir / "pauc.csv");
  EXPECT_EQ(table.header, (std::vector<std::string>{"method", "fmr", "discard_limit", "raw_pauc", "normalized_pauc",
                                                    "fnmr_at_zero"}));
  EXPECT_EQ(table.rows.size(), 4u);
  ASSERT_EQ(rep.methods.size(), 2u);
  EXPECT_LE(rep.threshold.achieved_fmr, 1e-2);
  EXPECT_LT(rep.methods[0].pauc[1].normalized, rep.methods[1].pauc[1].normalized);
  const auto edc = read_csv(cfg_.out_dir / "edc_oracle.csv");
  EXPECT_EQ(edc.header, (std::vector<std::string>{"discard_fraction", "fnmr"}));
  EXPECT_EQ(edc.rows.size(), rep.methods[0].curve.points.size());
}

TEST_F(Protocol, RegenerationIsByteIdentical) {
  cfg_.out_dir = dir_ / "a";
  std::filesystem::create_directories(cfg_.out_dir);
  run_protocol(cfg_);
  cfg_.out_dir = dir_ / "b";
  std::filesystem::create_directories(cfg_.out_dir);
  run_protocol(cfg_);
  for (const char* f : {"pauc.csv", "edc_oracle.csv", "edc_random.csv", "edc.svg"})
    EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
}

TEST_F(Protocol, ParseErrorsCarryLineNumbers) {
  write_file(dir_ / "bad_pairs.csv", "ref_a,ref_b,label\na,b,mated\nc,d,maybe\n");
  try {
    load_pairs_csv(dir_ / "bad_pairs.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 3u);
  }
  write_file(dir_ / "bad_q.csv", "path,quality\na,0.5\nb,zero\n");
  EXPECT_THROW(load_qualities_csv(dir_ / "bad_q.csv"), ParseError);
}

TEST_F(Protocol, MissingEmbeddingNamesReference) {
  write_file(dir_ / "pairs2.csv", "ref_a,ref_b,label\nid0/0.pgm,nobody.pgm,mated\nid0/0.pgm,id1/0.pgm,non-mated\n");
  cfg_.pairs = dir_ / "pairs2.csv";
  try {
    run_protocol(cfg_);
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("nobody.pgm"), std::string::npos);
  }
}

}  // namespace
}  // namespace diffqa
