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

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffqa/denoiser.hpp"
#include "diffqa/embedder.hpp"
#include "diffqa/image.hpp"

namespace diffqa {

/// Supplies the noise stream for one diffusion branch; the argument is the stream seed.
using NoiseFactory = std::function<std::unique_ptr<NoiseSource>(std::uint64_t)>;

struct ScorerConfig {
  int t_infer = 5;
  std::size_t n = 10;
  bool use_flip = true;
  bool use_forward_term = true;
  bool use_backward_term = true;
  std::uint64_t seed = 0;
  /// Embed the mirrored input once instead of once per repetition (bit-identical).
  bool cache_flip_embedding = true;
  /// Empty: independent Gaussian streams. Tests inject deterministic noise here.
  NoiseFactory noise;

  void validate(int max_step) const;
};

/// Members of the comparison set, each compared with the embedding of the input.
enum class Term : std::size_t { kNoisy, kRestored, kFlipped, kFlippedNoisy, kFlippedRestored };
constexpr std::size_t kTermCount = 5;
std::string_view term_name(Term t);
/// Terms enabled by the flags, in enum order.
std::vector<Term> active_terms(const ScorerConfig& cfg);

struct QualityScore {
  double value = 0.0;
  /// Mean similarity per term over the repetitions; empty for disabled terms.
  std::array<std::optional<double>, kTermCount> term_means{};
  std::size_t set_size = 0;
};

/// Scores one image with stream seed `item_seed`.
QualityScore score_image(const Image& x, const Denoiser& model, const Embedder& embedder, const ScorerConfig& cfg,
                         std::uint64_t item_seed);
/// Same as item 0 of a batch.
QualityScore score_image(const Image& x, const Denoiser& model, const Embedder& embedder, const ScorerConfig& cfg);

/// Seed of the item at global position `index`.
std::uint64_t item_seed(const ScorerConfig& cfg, std::size_t index);

/// Scores in-memory images; item i uses item_seed(cfg, index_offset + i).
std::vector<QualityScore> score_images(std::span<const Image> images, const Denoiser& model, const Embedder& embedder,
                                       const ScorerConfig& cfg, std::size_t index_offset = 0);

struct ScoreRecord {
  std::string ref;
  std::optional<double> quality;
  std::string error;
};

/// Loads and scores each reference; failures are recorded per item and the batch continues.
std::vector<ScoreRecord> score_batch(std::span<const std::string> refs, const Denoiser& model, const Embedder& embedder,
                                     const ScorerConfig& cfg, std::size_t index_offset = 0,
                                     const std::filesystem::path& base_dir = {});

/// `path,quality` rows for the successful records, 9 significant digits.
void write_quality_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records);
/// `path,error` rows for the failed records.
void write_error_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records);

}  // namespace diffqa
