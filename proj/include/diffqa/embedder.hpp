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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffqa/autograd.hpp"
#include "diffqa/image.hpp"
#include "diffqa/tensor_table.hpp"

namespace diffqa {

/// Embedding vector; not normalized (cosine_similarity normalizes).
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Clamped to [-1, 1]. Throws ContractError on dimension mismatch or a zero-norm operand.
double cosine_similarity(const Embedding& a, const Embedding& b);

/// Face-recognition model stand-in.
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t image_size() const = 0;
  virtual std::size_t channels() const = 0;

  /// Backbone features for an [N, C, H, W] input, as a graph node of shape [N, F].
  virtual Var features(Graph<float>& g, const ParameterSet<float>& params, Var x) const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// Unnormalized embedding node [N, dim()].
  virtual Var embedding(Graph<float>& g, const ParameterSet<float>& params, Var x) const = 0;
  /// Parameters consumed by `features` and `embedding`.
  virtual const ParameterSet<float>& parameters() const = 0;

  /// Embeddings for an [N, C, H, W] batch.
  virtual std::vector<Embedding> embed_batch(const TensorF& x) const = 0;

  Embedding embed(const Image& x) const;
  std::vector<Embedding> embed_images(std::span<const Image> images) const;

 protected:
  void check_input(const Shape& shape) const;
};

/// Fixed random linear map of average-pooled pixels. Linear in the input.
class ProjectionEmbedder final : public Embedder {
 public:
  ProjectionEmbedder(std::size_t image_size, std::size_t channels, std::size_t dim, std::size_t pool,
                     std::uint64_t seed);

  std::size_t dim() const override { return dim_; }
  std::size_t image_size() const override { return image_size_; }
  std::size_t channels() const override { return channels_; }
  std::size_t pool() const noexcept { return pool_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Var features(Graph<float>& g, const ParameterSet<float>& params, Var x) const override;
  std::size_t feature_dim() const override { return dim_; }
  Var embedding(Graph<float>& g, const ParameterSet<float>& params, Var x) const override {
    return features(g, params, x);
  }
  const ParameterSet<float>& parameters() const override { return params_; }
  std::vector<Embedding> embed_batch(const TensorF& x) const override;

 private:
  std::size_t image_size_, channels_, dim_, pool_;
  std::uint64_t seed_;
  ParameterSet<float> params_;  // "proj.pool" [C*H*W, P] (fixed), "proj.w" [P, dim]
};

struct ConvEmbedderConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t width = 16;
  std::size_t dim = 32;

  void validate() const;
};

/// Three stride-2-ish convolutions and a dense projection, trained with a pairwise margin loss.
class ConvEmbedder final : public Embedder {
 public:
  ConvEmbedder(ConvEmbedderConfig cfg, std::uint64_t seed);
  ConvEmbedder(ConvEmbedderConfig cfg, ParameterSet<float> params);

  std::size_t dim() const override { return cfg_.dim; }
  std::size_t image_size() const override { return cfg_.image_size; }
  std::size_t channels() const override { return cfg_.channels; }
  const ConvEmbedderConfig& config() const noexcept { return cfg_; }

  /// Flattened last convolution activations.
  Var features(Graph<float>& g, const ParameterSet<float>& params, Var x) const override;
  std::size_t feature_dim() const override;
  const ParameterSet<float>& parameters() const override { return params_; }
  ParameterSet<float>& parameters() { return params_; }

  Var embedding(Graph<float>& g, const ParameterSet<float>& params, Var x) const override;
  std::vector<Embedding> embed_batch(const TensorF& x) const override;

  TensorTable to_table() const;
  static ConvEmbedder from_table(const TensorTable& table);
  void save(const std::filesystem::path& path) const { to_table().save(path); }
  static ConvEmbedder load(const std::filesystem::path& path) { return from_table(TensorTable::load(path)); }

 private:
  ConvEmbedderConfig cfg_;
  ParameterSet<float> params_;
};

struct EmbedderTrainConfig {
  std::size_t epochs = 30;
  std::size_t identities_per_batch = 8;
  std::size_t samples_per_identity = 4;
  double lr = 2e-3;
  double margin = 0.2;
  std::uint64_t seed = 0;
};

/// Pairwise margin loss: mated pairs pulled to cosine 1, non-mated pushed below `margin`.
/// Returns the mean loss of each epoch.
std::vector<double> train_embedder(ConvEmbedder& model, std::span<const Image> images, std::span<const int> identities,
                                   const EmbedderTrainConfig& cfg);

/// Precomputed embeddings keyed by image reference.
class EmbeddingTable {
 public:
  void put(const std::string& ref, Embedding e);
  bool contains(const std::string& ref) const { return table_.count(ref) != 0; }
  /// Throws ContractError naming the reference when absent.
  const Embedding& at(const std::string& ref) const;
  std::size_t size() const noexcept { return table_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::map<std::string, Embedding>& entries() const noexcept { return table_; }

  /// CSV `path,e0,...` with 17 significant digits, or a tensor table of 1-D f64 entries.
  /// The format follows the extension: `.csv` or anything else for the binary table.
  void save(const std::filesystem::path& path) const;
  static EmbeddingTable load(const std::filesystem::path& path);

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::map<std::string, Embedding> table_;
  std::size_t dim_ = 0;
};

enum class EmbedderKind { kProjection, kTrainedToy, kExternalImport };

EmbedderKind parse_embedder_kind(const std::string& s);
std::string embedder_kind_name(EmbedderKind k);

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::kProjection;
  std::size_t dim = 32;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t pool = 2;
  std::uint64_t seed = 0;
  std::filesystem::path path;  // checkpoint (trained-toy) or embedding file (external-import)

  void validate() const;
};

/// Builds an image embedder. External-import specs serve by reference only, so they are
/// rejected here; use EmbeddingTable::load.
std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec);

}  // namespace diffqa
