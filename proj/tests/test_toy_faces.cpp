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

#include <algorithm>
#include <map>

#include "diffqa/errors.hpp"
#include "diffqa/toy_faces.hpp"

namespace diffqa {
namespace {

TEST(ToyFaces, DeterministicPerSeed) {
  ToyFaceConfig cfg;
  cfg.seed = 3;
  const auto a = make_toy_faces(cfg), b = make_toy_faces(cfg);
  ASSERT_EQ(a.size(), 64u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].identity, b[i].identity);
    EXPECT_EQ(a[i].name, b[i].name);
  }
  cfg.seed = 4;
  EXPECT_NE(make_toy_faces(cfg)[0].image, a[0].image);
}

TEST(ToyFaces, GrowingTheSetKeepsEarlierIdentities) {
  ToyFaceConfig small;
  small.identities = 3;
  ToyFaceConfig big = small;
  big.identities = 9;
  const auto a = make_toy_faces(small), b = make_toy_faces(big);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].image, b[i].image);
}

TEST(ToyFaces, EveryIdentityHasTwoOrMoreSamples) {
  ToyFaceConfig cfg;
  cfg.identities = 10;
  cfg.samples_per_identity = 2;
  std::map<int, int> count;
  for (const auto& f : make_toy_faces(cfg)) {
    ++count[f.identity];
    EXPECT_EQ(f.image.width(), 16u);
    EXPECT_EQ(f.image.channels(), 1u);
    for (float p : f.image.pixels()) {
      EXPECT_GE(p, -1.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
  EXPECT_EQ(count.size(), 10u);
  for (const auto& [id, n] : count) EXPECT_GE(n, 2);
  cfg.samples_per_identity = 1;
  EXPECT_THROW(cfg.validate(), ContractError);
}

TEST(ToyFaces, DefaultViewIsMirrorSymmetric) {
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto id = sample_identity(rng);
    for (std::size_t size : {16u, 32u}) {
      const Image x = render_face(id, FaceView{}, size);
      EXPECT_EQ(mirror(x), x);
      const Image c = render_face(id, FaceView{}, size, 3);
      EXPECT_EQ(mirror(c), c);
    }
    FaceView turned;
    turned.yaw = 0.8;
    const Image y = render_face(id, turned, 16);
    EXPECT_NE(mirror(y), y);
  }
}

TEST(ToyFaces, SeverityZeroIsIdentityAndLevelsDiffer) {
  ToyFaceConfig cfg;
  cfg.identities = 2;
  const Image x = make_toy_faces(cfg)[0].image;
  Rng rng(6);
  EXPECT_EQ(apply_severity(x, 0, rng), x);
  double prev = 0.0;
  for (int level = 1; level < kSeverityLevels; ++level) {
    double d = 0.0;
    for (int r = 0; r < 20; ++r) {
      Rng lr(derive_seed(7, static_cast<std::uint64_t>(r)));
      d += mse(apply_severity(x, level, lr), x);
    }
    EXPECT_GT(d, prev) << "level " << level;
    prev = d;
  }
  EXPECT_THROW(apply_severity(x, kSeverityLevels, rng), ContractError);
}

TEST(ToyPairs, AllMatedPlusCappedNonMated) {
  ToyFaceConfig cfg;
  cfg.identities = 6;
  cfg.samples_per_identity = 3;
  const auto faces = make_toy_faces(cfg);
  const auto all = make_toy_pairs(faces, 1000000, 1);
  std::size_t mated = 0, nonmated = 0;
  for (const auto& p : all) {
    EXPECT_LT(p.a, p.b);
    EXPECT_EQ(p.mated, faces[p.a].identity == faces[p.b].identity);
    (p.mated ? mated : nonmated)++;
  }
  EXPECT_EQ(mated, 6u * 3u);
  EXPECT_EQ(nonmated, 18u * 17u / 2u - 18u);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(),
                             [](const auto& x, const auto& y) { return std::pair(x.a, x.b) < std::pair(y.a, y.b); }));

  const auto capped = make_toy_pairs(faces, 20, 2);
  std::size_t cm = 0, cn = 0;
  for (const auto& p : capped) (p.mated ? cm : cn)++;
  EXPECT_EQ(cm, 18u);
  EXPECT_EQ(cn, 20u);
  for (std::size_t i = 1; i < capped.size(); ++i)
    EXPECT_NE(std::pair(capped[i].a, capped[i].b), std::pair(capped[i - 1].a, capped[i - 1].b));
  const auto again = make_toy_pairs(faces, 20, 2);
  ASSERT_EQ(again.size(), capped.size());
  for (std::size_t i = 0; i < capped.size(); ++i) EXPECT_EQ(again[i].a, capped[i].a);
}

}  // namespace
}  // namespace diffqa
