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

#include "diffqa/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "diffqa/errors.hpp"

namespace diffqa {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  DIFFQA_REQUIRE(!betas.empty(), "noise schedule needs at least one step");
  NoiseSchedule s;
  const std::size_t T = betas.size();
  s.beta_.assign(T + 1, 0.0);
  s.alpha_bar_.assign(T + 1, 1.0);
  s.one_minus_alpha_bar_.assign(T + 1, 0.0);
  s.beta_tilde_.assign(T + 1, 0.0);
  double log_alpha_bar = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const double b = betas[t - 1];
    DIFFQA_REQUIRE(b > 0.0 && b < 1.0, "beta[" + std::to_string(t) + "] must lie in (0, 1)");
    s.beta_[t] = b;
    log_alpha_bar += std::log1p(-b);
    s.alpha_bar_[t] = std::exp(log_alpha_bar);
    s.one_minus_alpha_bar_[t] = -std::expm1(log_alpha_bar);
    s.beta_tilde_[t] = s.one_minus_alpha_bar_[t - 1] / s.one_minus_alpha_bar_[t] * b;
  }
  return s;
}

std::size_t NoiseSchedule::check(int t) const {
  if (t < 0 || t > steps()) {
    throw ContractError("schedule step " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  }
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::posterior_coef_x0(int t) const {
  DIFFQA_REQUIRE(t >= 1, "posterior coefficients need t >= 1");
  return std::sqrt(alpha_bar(t - 1)) * beta(t) / one_minus_alpha_bar(t);
}

double NoiseSchedule::posterior_coef_xt(int t) const {
  DIFFQA_REQUIRE(t >= 1, "posterior coefficients need t >= 1");
  return std::sqrt(alpha(t)) * one_minus_alpha_bar(t - 1) / one_minus_alpha_bar(t);
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  DIFFQA_REQUIRE(T >= 1, "schedule length must be positive");
  DIFFQA_REQUIRE(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
                 "linear schedule needs 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

double degradation_coefficient(int t, int T) {
  DIFFQA_REQUIRE(T >= 1, "degradation schedule length must be positive");
  if (t < 0 || t > T) {
    throw ContractError("degradation step " + std::to_string(t) + " outside [0, " + std::to_string(T) + "]");
  }
  return std::sin(static_cast<double>(t) / static_cast<double>(T) * (std::numbers::pi / 2.0));
}

DegradationSchedule::DegradationSchedule(int T) {
  DIFFQA_REQUIRE(T >= 1, "degradation schedule length must be positive");
  coef_.resize(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) coef_[static_cast<std::size_t>(t)] = degradation_coefficient(t, T);
}

double DegradationSchedule::operator()(int t) const {
  if (t < 0 || t > steps()) {
    throw ContractError("degradation step " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
  }
  return coef_[static_cast<std::size_t>(t)];
}

}  // namespace diffqa
