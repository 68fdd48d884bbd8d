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
#include <vector>

namespace diffqa {

/// Per-step noise variances and derived products.
///
/// Index convention: t = 0 is the clean image. Every array has T + 1 entries;
/// index 0 is a sentinel with beta = 0, alpha_bar = 1, beta_tilde = 0, and
/// steps 1..T carry the actual schedule.
class NoiseSchedule {
 public:
  /// Builds the derived arrays from beta_1..beta_T, each in (0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(beta_.size()) - 1; }
  double beta(int t) const { return beta_.at(check(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t)); }
  /// 1 - alpha_bar[t], evaluated without cancellation.
  double one_minus_alpha_bar(int t) const { return one_minus_alpha_bar_.at(check(t)); }
  /// Posterior variance ((1 - alpha_bar[t-1]) / (1 - alpha_bar[t])) * beta[t]; zero at t <= 1.
  double beta_tilde(int t) const { return beta_tilde_.at(check(t)); }

  /// Coefficients of the posterior mean mu = c0 * x0 + ct * x_t for step t >= 1.
  double posterior_coef_x0(int t) const;
  double posterior_coef_xt(int t) const;

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  const std::vector<double>& beta_tildes() const noexcept { return beta_tilde_; }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  std::size_t check(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> one_minus_alpha_bar_;
  std::vector<double> beta_tilde_;
};

/// beta linearly spaced from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule make_linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

/// sin((t / T) * pi / 2): 0 at t = 0, 1 at t = T.
double degradation_coefficient(int t, int T);

/// Tabulated degradation-mixing coefficients for t = 0..T.
class DegradationSchedule {
 public:
  explicit DegradationSchedule(int T);
  int steps() const noexcept { return static_cast<int>(coef_.size()) - 1; }
  double operator()(int t) const;
  const std::vector<double>& values() const noexcept { return coef_; }

 private:
  std::vector<double> coef_;
};

}  // namespace diffqa
