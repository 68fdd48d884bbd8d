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

#include "diffqa/scorer.hpp"

#include <algorithm>
#include <cmath>

#include "diffqa/csv.hpp"
#include "diffqa/errors.hpp"
#include "diffqa/rng.hpp"

namespace diffqa {

void ScorerConfig::validate(int max_step) const {
  if (t_infer < 1 || t_infer > max_step) {
    throw ContractError("scorer: t_infer " + std::to_string(t_infer) + " outside [1, " + std::to_string(max_step) + "]");
  }
  DIFFQA_REQUIRE(n >= 1, "scorer: n must be at least 1");
  DIFFQA_REQUIRE(!active_terms(*this).empty(), "scorer: every term is disabled, the comparison set is empty");
}

std::string_view term_name(Term t) {
  switch (t) {
    case Term::kNoisy: return "noisy";
    case Term::kRestored: return "restored";
    case Term::kFlipped: return "flipped";
    case Term::kFlippedNoisy: return "flipped_noisy";
    case Term::kFlippedRestored: return "flipped_restored";
  }
  return "?";
}

std::vector<Term> active_terms(const ScorerConfig& cfg) {
  std::vector<Term> out;
  if (cfg.use_forward_term) out.push_back(Term::kNoisy);
  if (cfg.use_backward_term) out.push_back(Term::kRestored);
  if (cfg.use_flip) {
    out.push_back(Term::kFlipped);
    if (cfg.use_forward_term) out.push_back(Term::kFlippedNoisy);
    if (cfg.use_backward_term) out.push_back(Term::kFlippedRestored);
  }
  return out;
}

std::uint64_t item_seed(const ScorerConfig& cfg, std::size_t index) { return derive_seed(cfg.seed, index); }

QualityScore score_image(const Image& x, const Denoiser& model, const Embedder& embedder, const ScorerConfig& cfg,
                         std::uint64_t seed) {
  cfg.validate(model.max_step());
  const auto terms = active_terms(cfg);
  const bool diffuse = cfg.use_forward_term || cfg.use_backward_term;
  const std::size_t branches = cfg.use_flip ? 2 : 1;
  const Image xf = cfg.use_flip ? mirror(x) : Image{};
  const Embedding ex = embedder.embed(x);
  std::optional<Embedding> exf;
  if (cfg.use_flip && cfg.cache_flip_embedding) exf = embedder.embed(xf);

  std::array<double, kTermCount> sums{};
  if (diffuse) {
    // Item r * branches + b holds repetition r of branch b (0: input, 1: mirrored).
    std::vector<Image> inputs;
    std::vector<std::unique_ptr<NoiseSource>> sources;
    for (std::size_t r = 0; r < cfg.n; ++r) {
      for (std::size_t b = 0; b < branches; ++b) {
        inputs.push_back(b == 0 ? x : xf);
        const std::uint64_t s = derive_seed(seed, r, b);
        sources.push_back(cfg.noise ? cfg.noise(s) : std::make_unique<GaussianNoise>(s));
      }
    }
    std::vector<NoiseSource*> ptrs;
    for (auto& s : sources) ptrs.push_back(s.get());
    const TensorF xt = forward_noise_batch(to_batch(inputs), cfg.t_infer, model.schedule(), ptrs);
    std::vector<Embedding> e_noisy, e_restored;
    if (cfg.use_forward_term) e_noisy = embedder.embed_batch(xt);
    if (cfg.use_backward_term) e_restored = embedder.embed_batch(backward_restore_batch(model, xt, cfg.t_infer, ptrs));
    for (std::size_t r = 0; r < cfg.n; ++r) {
      for (std::size_t b = 0; b < branches; ++b) {
        const std::size_t k = r * branches + b;
        if (cfg.use_forward_term) {
          sums[static_cast<std::size_t>(b ? Term::kFlippedNoisy : Term::kNoisy)] += cosine_similarity(ex, e_noisy[k]);
        }
        if (cfg.use_backward_term) {
          sums[static_cast<std::size_t>(b ? Term::kFlippedRestored : Term::kRestored)] +=
              cosine_similarity(ex, e_restored[k]);
        }
      }
    }
  }
  if (cfg.use_flip) {
    for (std::size_t r = 0; r < cfg.n; ++r) {
      const Embedding e = exf ? *exf : embedder.embed(xf);
      sums[static_cast<std::size_t>(Term::kFlipped)] += cosine_similarity(ex, e);
    }
  }

  QualityScore q;
  q.set_size = terms.size();
  double total = 0.0;
  for (Term t : terms) {
    const double m = sums[static_cast<std::size_t>(t)] / static_cast<double>(cfg.n);
    q.term_means[static_cast<std::size_t>(t)] = m;
    total += m;
  }
  q.value = std::clamp(total / static_cast<double>(terms.size()), -1.0, 1.0);
  if (!std::isfinite(q.value)) throw NumericError("score_image: non-finite quality");
  return q;
}

QualityScore score_image(const Image& x, const Denoiser& model, const Embedder& embedder, const ScorerConfig& cfg) {
  return score_image(x, model, embedder, cfg, item_seed(cfg, 0));
}

std::vector<QualityScore> score_images(std::span<const Image> images, const Denoiser& model, const Embedder& embedder,
                                       const ScorerConfig& cfg, std::size_t index_offset) {
  std::vector<QualityScore> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.push_back(score_image(images[i], model, embedder, cfg, item_seed(cfg, index_offset + i)));
  }
  return out;
}

std::vector<ScoreRecord> score_batch(std::span<const std::string> refs, const Denoiser& model, const Embedder& embedder,
                                     const ScorerConfig& cfg, std::size_t index_offset,
                                     const std::filesystem::path& base_dir) {
  cfg.validate(model.max_step());
  std::vector<ScoreRecord> out;
  out.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ScoreRecord rec{refs[i], std::nullopt, ""};
    try {
      const std::filesystem::path p = base_dir.empty() ? std::filesystem::path(refs[i]) : base_dir / refs[i];
      rec.quality = score_image(load_image(p), model, embedder, cfg, item_seed(cfg, index_offset + i)).value;
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_quality_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records) {
    if (r.quality) rows.push_back({r.ref, format_real(*r.quality, 9)});
  }
  write_csv(path, {"path", "quality"}, rows);
}

void write_error_csv(const std::filesystem::path& path, std::span<const ScoreRecord> records) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : records) {
    if (r.quality) continue;
    std::string msg = r.error;
    for (char& c : msg) {
      if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    rows.push_back({r.ref, msg});
  }
  write_csv(path, {"path", "error"}, rows);
}

}  // namespace diffqa
