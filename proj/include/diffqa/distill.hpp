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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "diffqa/autograd.hpp"
#include "diffqa/denoiser.hpp"
#include "diffqa/embedder.hpp"
#include "diffqa/scorer.hpp"
#include "diffqa/tensor_table.hpp"

namespace diffqa {

struct LabelEntry {
  std::string ref;
  double raw = 0.0;
  double normalized = 0.0;
  bool train = true;

  friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

/// Teacher scores with min-max normalization fitted on the training split.
struct LabelSet {
  std::vector<LabelEntry> entries;
  double min_raw = 0.0;
  double max_raw = 1.0;

  std::size_t train_count() const;
  std::size_t validation_count() const { return entries.size() - train_count(); }

  /// CSV `path,raw,normalized,split` (split is `train` or `val`).
  void save_csv(const std::filesystem::path& path) const;
  static LabelSet load_csv(const std::filesystem::path& path);

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

/// FNV-1a 64-bit hash of the reference string.
std::uint64_t stable_hash(const std::string& ref);
/// Deterministic split: `train_fraction` of the hash space goes to training.
bool in_train_split(const std::string& ref, double train_fraction = 0.9);

/// Fits min/max on the training entries and fills `normalized`, clipped to [0, 1].
/// Throws ContractError when the training split is empty or its raw scores are constant.
void normalize_labels(LabelSet& labels);

/// Builds a normalized label set from raw scores, splitting by hash.
LabelSet make_label_set(std::span<const std::string> refs, std::span<const double> raw, double train_fraction = 0.9);

/// Teacher labels for in-memory images; item i uses the scorer seed of index i.
LabelSet generate_labels(std::span<const std::string> refs, std::span<const Image> images, const Denoiser& model,
                         const Embedder& embedder, const ScorerConfig& cfg, double train_fraction = 0.9);
/// Teacher labels for image files. Any unreadable image aborts with its error.
LabelSet generate_labels(std::span<const std::string> refs, const Denoiser& model, const Embedder& embedder,
                         const ScorerConfig& cfg, double train_fraction = 0.9,
                         const std::filesystem::path& base_dir = {});

struct RegressorConfig {
  std::size_t hidden = 32;
  double lr = 1e-3;
  std::size_t epochs = 2000;
  std::size_t batch_size = 32;
  std::size_t patience = 200;
  bool fine_tune_backbone = false;
  std::uint64_t seed = 0;
};

struct RegressorReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
};

/// Dense head with a linear skip over standardized head inputs. Output clamped to [0, 1].
///
/// Head inputs for an image x are the backbone features of x followed by the squared
/// elementwise difference of the unit-normalized embeddings of x and its mirror image.
class RegressorModel {
 public:
  RegressorModel(std::shared_ptr<const Embedder> backbone, std::size_t hidden, std::uint64_t seed);

  /// Single forward pass; output in [0, 1].
  double score(const Image& x) const;
  std::vector<double> score_batch(const TensorF& x) const;

  /// Unclamped head output node [N, 1].
  Var build(Graph<float>& g, const ParameterSet<float>& backbone, const ParameterSet<float>& head, Var x) const;
  /// Head output from precomputed raw head inputs [N, F].
  Var build_from_features(Graph<float>& g, const ParameterSet<float>& head, Var features) const;
  /// Unstandardized head inputs [N, F]. The image batch is treated as data (no gradient).
  Var head_input(Graph<float>& g, const ParameterSet<float>& backbone, Var x) const;
  TensorF raw_features(const TensorF& x) const;
  std::size_t feature_dim() const;

  const Embedder& backbone() const noexcept { return *backbone_; }
  ParameterSet<float>& backbone_params() noexcept { return backbone_params_; }
  const ParameterSet<float>& backbone_params() const noexcept { return backbone_params_; }
  ParameterSet<float>& head_params() noexcept { return head_; }
  const ParameterSet<float>& head_params() const noexcept { return head_; }
  void set_feature_stats(TensorF mean, TensorF inv_std);
  const TensorF& feature_mean() const noexcept { return mean_; }
  const TensorF& feature_inv_std() const noexcept { return inv_std_; }

  TensorTable to_table() const;
  static RegressorModel from_table(const TensorTable& t);
  void save(const std::filesystem::path& path) const { to_table().save(path); }
  static RegressorModel load(const std::filesystem::path& path) { return from_table(TensorTable::load(path)); }

 private:
  std::shared_ptr<const Embedder> backbone_;
  ParameterSet<float> backbone_params_;
  ParameterSet<float> head_;
  TensorF mean_, inv_std_;  // [1, F]
};

/// Trains the head (and the backbone when fine-tuning) with MSE and Adam; restores the
/// parameters of the best validation epoch. `images` are aligned with `labels.entries`.
RegressorReport train_regressor(RegressorModel& model, const LabelSet& labels, std::span<const Image> images,
                                const RegressorConfig& cfg);

double score_distilled(const RegressorModel& model, const Image& x);

struct FidelityReport {
  double pearson = 0.0;
  double spearman = 0.0;
  std::size_t count = 0;
};

/// Student vs normalized teacher labels on the validation split.
FidelityReport distillation_fidelity(const RegressorModel& model, const LabelSet& labels,
                                     std::span<const Image> images);

}  // namespace diffqa
