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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "diffqa/eval.hpp"

namespace diffqa::testing {

/// Quadratic-time reference for edc_curve: every distinct quality is a candidate cut,
/// and each cut recounts discarded pairs and failures from scratch.
inline EdcCurve brute_force_edc(const std::vector<double>& scores, const std::vector<double>& quality, double tau,
                                double limit) {
  const std::size_t m = scores.size();
  EdcCurve c;
  c.threshold = tau;
  c.mated_total = m;
  std::size_t fail0 = 0;
  for (double s : scores) fail0 += s < tau;
  c.fnmr_at_zero = static_cast<double>(fail0) / static_cast<double>(m);
  c.points.push_back({0.0, c.fnmr_at_zero, m});
  std::vector<double> cuts = quality;
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  for (double cut : cuts) {
    std::size_t gone = 0, fail = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (quality[i] <= cut) {
        ++gone;
      } else if (scores[i] < tau) {
        ++fail;
      }
    }
    if (gone == m) break;
    const double frac = static_cast<double>(gone) / static_cast<double>(m);
    if (frac > limit) break;
    c.points.push_back({frac, static_cast<double>(fail) / static_cast<double>(m - gone), m - gone});
  }
  return c;
}

/// Reference threshold by scanning every candidate from the top down.
inline double brute_force_threshold(const std::vector<double>& nonmated, double fmr) {
  std::vector<double> cand = nonmated;
  std::sort(cand.begin(), cand.end());
  double best = std::nextafter(cand.back(), std::numeric_limits<double>::infinity());
  for (auto it = cand.rbegin(); it != cand.rend(); ++it) {
    std::size_t above = 0;
    for (double s : nonmated) above += s >= *it;
    if (static_cast<double>(above) > fmr * static_cast<double>(nonmated.size()) + 1e-9) break;
    best = *it;
  }
  return best;
}

/// Integral of fnmr_at over [0, limit], summed between consecutive breakpoints.
inline double brute_force_pauc(const EdcCurve& c, double limit) {
  std::vector<double> knots{limit};
  for (const auto& p : c.points)
    if (p.discard_fraction < limit) knots.push_back(p.discard_fraction);
  std::sort(knots.begin(), knots.end());
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) area += c.fnmr_at(knots[k]) * (knots[k + 1] - knots[k]);
  return area;
}

}  // namespace diffqa::testing
