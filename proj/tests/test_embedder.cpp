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

#include "diffqa/embedder.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/toy_faces.hpp"
#include "test_util.hpp"

namespace diffqa {
namespace {

Embedding vec(std::vector<double> v) { return Embedding{std::move(v)}; }

TEST(Cosine, ClosedFormExamples) {
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 2, 3}), vec({-1, -2, -3})), -1.0);
  EXPECT_NEAR(cosine_similarity(vec({1, 0}), vec({1, 1})), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(cosine_similarity(vec({1, 0}), vec({0, 3})), 0.0);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Embedding a, b;
    for (int i = 0; i < 16; ++i) {
      a.values.push_back(rng.normal());
      b.values.push_back(rng.normal());
    }
    const double c = cosine_similarity(a, b);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
    EXPECT_EQ(c, cosine_similarity(b, a));
    const double lambda = std::exp(rng.uniform(-5.0, 5.0));
    Embedding sa = a;
    for (auto& v : sa.values) v *= lambda;
    EXPECT_NEAR(cosine_similarity(sa, b), c, 1e-12);
  }
}

TEST(Cosine, RejectsZeroNormAndDimensionMismatch) {
  EXPECT_THROW(cosine_similarity(vec({0, 0}), vec({1, 0})), ContractError);
  EXPECT_THROW(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), ContractError);
}

TEST(ProjectionEmbedder, IsLinear) {
  ProjectionEmbedder e(16, 1, 32, 2, 3);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Image x = testing::random_image(16, 1, rng);
    const double a = rng.uniform(-3.0, 3.0);
    Image ax = x;
    for (auto& p : ax.pixels()) p *= static_cast<float>(a);
    const auto ex = e.embed(x), eax = e.embed(ax);
    ASSERT_EQ(ex.dim(), 32u);
    for (std::size_t i = 0; i < ex.dim(); ++i) EXPECT_NEAR(eax.values[i], a * ex.values[i], 1e-5);
  }
}

TEST(ProjectionEmbedder, DeterministicPerSeed) {
  Rng rng(3);
  Image x = testing::random_image(16, 1, rng);
  EXPECT_EQ(ProjectionEmbedder(16, 1, 8, 2, 5).embed(x), ProjectionEmbedder(16, 1, 8, 2, 5).embed(x));
  EXPECT_NE(ProjectionEmbedder(16, 1, 8, 2, 5).embed(x), ProjectionEmbedder(16, 1, 8, 2, 6).embed(x));
}

TEST(Embedders, IdenticalImagesGiveCosineOne) {
  Rng rng(4);
  Image x = testing::random_image(16, 1, rng);
  ProjectionEmbedder p(16, 1, 32, 2, 1);
  ConvEmbedder c(ConvEmbedderConfig{}, 1);
  EXPECT_EQ(p.embed(x), p.embed(Image(x)));
  EXPECT_DOUBLE_EQ(cosine_similarity(p.embed(x), p.embed(x)), 1.0);
  EXPECT_EQ(c.embed(x), c.embed(Image(x)));
  EXPECT_DOUBLE_EQ(cosine_similarity(c.embed(x), c.embed(x)), 1.0);
}

TEST(Embedders, BatchMatchesSingle) {
  Rng rng(5);
  std::vector<Image> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(testing::random_image(16, 1, rng));
  ConvEmbedder c(ConvEmbedderConfig{}, 2);
  const auto batch = c.embed_images(xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto one = c.embed(xs[i]);
    for (std::size_t k = 0; k < one.dim(); ++k) EXPECT_NEAR(batch[i].values[k], one.values[k], 1e-5);
  }
}

TEST(Embedders, SizeMismatchIsContractError) {
  ProjectionEmbedder p(16, 1, 8, 2, 1);
  ConvEmbedder c(ConvEmbedderConfig{}, 1);
  Image wrong(8, 8, 1, 0.1f);
  Image color(16, 16, 3, 0.1f);
  EXPECT_THROW(p.embed(wrong), ContractError);
  EXPECT_THROW(c.embed(wrong), ContractError);
  EXPECT_THROW(c.embed(color), ContractError);
}

TEST(ConvEmbedder, CheckpointRoundTrip) {
  ConvEmbedder c(ConvEmbedderConfig{}, 9);
  const auto dir = testing::fresh_dir("embedder_ckpt");
  c.save(dir / "e.bin");
  ConvEmbedder d = ConvEmbedder::load(dir / "e.bin");
  Rng rng(6);
  Image x = testing::random_image(16, 1, rng);
  EXPECT_EQ(c.embed(x), d.embed(x));
  EXPECT_EQ(c.parameters(), d.parameters());
}

TEST(ConvEmbedder, TrainingSeparatesHeldOutIdentities) {
  ToyFaceConfig tc;
  tc.identities = 100;
  tc.samples_per_identity = 4;
  tc.pose_jitter = 0.5;
  tc.illumination_jitter = 0.2;
  tc.seed = 1000;
  std::vector<Image> imgs;
  std::vector<int> ids;
  for (auto& f : make_toy_faces(tc)) {
    imgs.push_back(f.image);
    ids.push_back(f.identity);
  }
  ConvEmbedder e(ConvEmbedderConfig{}, 5);
  EmbedderTrainConfig ec;
  ec.epochs = 20;
  const auto losses = train_embedder(e, imgs, ids, ec);
  ASSERT_EQ(losses.size(), 20u);
  EXPECT_LT(losses.back(), losses.front());

  ToyFaceConfig hc = tc;
  hc.identities = 30;
  hc.seed = 2000;
  const auto held = make_toy_faces(hc);
  std::vector<Image> him;
  for (auto& f : held) him.push_back(f.image);
  const auto emb = e.embed_images(him);
  double mated = 0, nonmated = 0;
  int nm = 0, nn = 0;
  for (std::size_t a = 0; a < held.size(); ++a) {
    for (std::size_t b = a + 1; b < held.size(); ++b) {
      const double c = cosine_similarity(emb[a], emb[b]);
      if (held[a].identity == held[b].identity) {
        mated += c;
        ++nm;
      } else {
        nonmated += c;
        ++nn;
      }
    }
  }
  EXPECT_GT(mated / nm - nonmated / nn, 0.2);
}

TEST(EmbeddingTable, RoundTripIsBitExact) {
  EmbeddingTable t;
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    Embedding e;
    for (int k = 0; k < 12; ++k) e.values.push_back(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
    t.put("img/" + std::to_string(i) + ".pgm", e);
  }
  const auto dir = testing::fresh_dir("embedding_table");
  for (const char* name : {"e.csv", "e.bin"}) {
    t.save(dir / name);
    EXPECT_EQ(EmbeddingTable::load(dir / name), t) << name;
  }
}

TEST(EmbeddingTable, MissingReferenceIsNamed) {
  EmbeddingTable t;
  t.put("a.pgm", vec({1, 2}));
  try {
    t.at("missing/b.pgm");
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("missing/b.pgm"), std::string::npos);
  }
  EXPECT_THROW(t.put("c.pgm", vec({1, 2, 3})), ContractError);
}

TEST(EmbedderSpec, KindsAndExternalImport) {
  for (auto k : {EmbedderKind::kProjection, EmbedderKind::kTrainedToy, EmbedderKind::kExternalImport})
    EXPECT_EQ(parse_embedder_kind(embedder_kind_name(k)), k);
  EXPECT_ANY_THROW(parse_embedder_kind("resnet"));

  EmbedderSpec spec;
  spec.dim = 8;
  auto p = make_embedder(spec);
  EXPECT_EQ(p->dim(), 8u);

  const auto dir = testing::fresh_dir("embedder_spec");
  ConvEmbedder c(ConvEmbedderConfig{}, 3);
  c.save(dir / "c.bin");
  spec.kind = EmbedderKind::kTrainedToy;
  spec.path = dir / "c.bin";
  auto loaded = make_embedder(spec);
  Rng rng(8);
  Image x = testing::random_image(16, 1, rng);
  EXPECT_EQ(loaded->embed(x), c.embed(x));

  spec.kind = EmbedderKind::kExternalImport;
  EXPECT_THROW(make_embedder(spec), ContractError);
}

}  // namespace
}  // namespace diffqa
