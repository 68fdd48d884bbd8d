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

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diffqa/embedder.hpp"

namespace diffqa {

struct PairEntry {
  std::string a, b;
  bool mated = false;

  friend bool operator==(const PairEntry&, const PairEntry&) = default;
};
using PairList = std::vector<PairEntry>;

/// CSV `ref_a,ref_b,label`; label is `mated`/`non-mated` (also `1`/`0`).
PairList load_pairs_csv(const std::filesystem::path& path);
void save_pairs_csv(const std::filesystem::path& path, const PairList& pairs);

/// CSV `path,quality`.
std::map<std::string, double> load_qualities_csv(const std::filesystem::path& path);

struct Similarities {
  std::vector<double> mated, nonmated;
  std::vector<std::size_t> mated_pair, nonmated_pair;  // index into the pair list
};

/// Cosine similarity of every pair, in list order. A missing reference is named in the error.
Similarities compute_similarities(const PairList& pairs, const EmbeddingTable& embeddings);

struct Threshold {
  double tau = 0.0;
  double achieved_fmr = 0.0;
};

/// Smallest threshold whose false match rate (fraction of non-mated scores >= tau) is at
/// most `fmr_target`. When even the largest score is blocked, tau sits just above it.
Threshold solve_threshold(std::span<const double> nonmated, double fmr_target);

struct EdcPoint {
  double discard_fraction = 0.0;
  double fnmr = 0.0;
  std::size_t surviving = 0;

  friend bool operator==(const EdcPoint&, const EdcPoint&) = default;
};

/// Non-interpolated error-versus-discard curve.
struct EdcCurve {
  std::vector<EdcPoint> points;
  double threshold = 0.0;
  double fmr_target = 0.0;
  double fnmr_at_zero = 0.0;
  std::size_t mated_total = 0;

  /// FNMR of the step function at discard fraction `d` (value of the left point).
  double fnmr_at(double d) const;
};

/// `mated_scores[i]` has pair quality `pair_quality[i]`. Lowest-quality pairs are discarded
/// first, one distinct quality value at a time, while the discarded fraction stays within
/// `discard_limit`. FNMR counts surviving mated scores below `threshold`.
EdcCurve edc_curve(std::span<const double> mated_scores, std::span<const double> pair_quality, double threshold,
                   double discard_limit);

/// Pair quality is the lower of the two image qualities.
std::vector<double> pair_qualities(const PairList& pairs, std::span<const std::size_t> pair_index,
                                   const std::map<std::string, double>& qualities);

struct PaucResult {
  double discard_limit = 0.0;
  double raw = 0.0;
  double normalized = 0.0;
  bool normalized_defined = false;  // false when the FNMR at zero discard is 0
};

/// Left-rectangle area under the step curve over [0, discard_limit].
PaucResult pauc(const EdcCurve& curve, double discard_limit);

struct ProtocolMethod {
  std::string name;
  std::filesystem::path qualities;
};

struct ProtocolConfig {
  std::filesystem::path pairs;
  std::filesystem::path embeddings;
  std::vector<ProtocolMethod> methods;
  double fmr = 1e-3;
  std::vector<double> discard_limits{0.3};
  std::filesystem::path out_dir;
  bool svg = false;
};

struct MethodResult {
  std::string name;
  EdcCurve curve;
  std::vector<PaucResult> pauc;
};

struct ProtocolReport {
  Threshold threshold;
  std::size_t mated = 0, nonmated = 0;
  std::vector<MethodResult> methods;
};

/// Evaluates one quality assignment against precomputed similarities.
MethodResult evaluate_method(const std::string& name, const PairList& pairs, const Similarities& sims,
                             const Threshold& threshold, double fmr_target,
                             const std::map<std::string, double>& qualities, std::span<const double> discard_limits);

/// Writes `edc_<method>.csv`, `pauc.csv` and optionally `edc.svg` into `out_dir`.
ProtocolReport run_protocol(const ProtocolConfig& cfg);

std::string edc_svg(const std::vector<MethodResult>& methods, double discard_limit);

}  // namespace diffqa
