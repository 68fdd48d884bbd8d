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

#include "diffqa/errors.hpp"
#include "diffqa/schedule.hpp"

namespace diffqa {
namespace {

TEST(NoiseSchedule, SingleStep) {
  auto s = make_linear_schedule(1, 0.3, 0.3);
  EXPECT_EQ(s.steps(), 1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.7);
}

TEST(NoiseSchedule, ConstantBetaProduct) {
  auto s = make_linear_schedule(2, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.81);
}

TEST(NoiseSchedule, SentinelAtZero) {
  auto s = make_linear_schedule(10);
  EXPECT_EQ(s.beta(0), 0.0);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_EQ(s.one_minus_alpha_bar(0), 0.0);
  EXPECT_EQ(s.beta_tilde(0), 0.0);
  EXPECT_THROW(s.alpha_bar(11), ContractError);
  EXPECT_THROW(s.alpha_bar(-1), ContractError);
}

TEST(NoiseSchedule, DefaultScheduleMatchesDirectProduct) {
  auto s = make_linear_schedule(1000, 1e-4, 0.02);
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / 999.0L;
    EXPECT_NEAR(s.beta(t), static_cast<double>(beta), 1e-15);
    prod *= 1.0L - beta;
    EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(prod), 1e-13 * static_cast<double>(prod) + 1e-300);
    EXPECT_NEAR(s.one_minus_alpha_bar(t), static_cast<double>(1.0L - prod), 1e-12 * static_cast<double>(1.0L - prod));
  }
  EXPECT_LT(s.alpha_bar(1000), 1e-4);
}

TEST(NoiseSchedule, AlphaBarStrictlyDecreasingInUnitInterval) {
  auto s = make_linear_schedule(1000);
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_GT(s.alpha_bar(t), 0.0);
    EXPECT_LT(s.alpha_bar(t), 1.0);
  }
}

TEST(NoiseSchedule, PosteriorVarianceFormula) {
  auto s = make_linear_schedule(1000);
  for (int t = 2; t <= 1000; ++t) {
    const double expected = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
    EXPECT_NEAR(s.beta_tilde(t), expected, 1e-12 * expected);
    EXPECT_GT(s.beta_tilde(t), 0.0);
    EXPECT_LE(s.beta_tilde(t), s.beta(t));
  }
  // The first step's posterior is a point mass: 1 - alpha_bar[0] = 0.
  EXPECT_EQ(s.beta_tilde(1), 0.0);
}

TEST(NoiseSchedule, PosteriorMeanCoefficients) {
  auto s = make_linear_schedule(100, 1e-3, 0.05);
  for (int t = 1; t <= 100; ++t) {
    const double c0 = std::sqrt(s.alpha_bar(t - 1)) * s.beta(t) / (1.0 - s.alpha_bar(t));
    const double ct = std::sqrt(1.0 - s.beta(t)) * (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t));
    EXPECT_NEAR(s.posterior_coef_x0(t), c0, 1e-12);
    EXPECT_NEAR(s.posterior_coef_xt(t), ct, 1e-12);
  }
  EXPECT_DOUBLE_EQ(s.posterior_coef_x0(1), 1.0);
  EXPECT_EQ(s.posterior_coef_xt(1), 0.0);
}

TEST(NoiseSchedule, InvalidRangesRejected) {
  EXPECT_THROW(make_linear_schedule(0), ContractError);
  EXPECT_THROW(make_linear_schedule(10, 0.0, 0.02), ContractError);
  EXPECT_THROW(make_linear_schedule(10, 0.03, 0.02), ContractError);
  EXPECT_THROW(make_linear_schedule(10, 1e-4, 1.0), ContractError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.5}), ContractError);
}

TEST(DegradationCoefficient, Endpoints) {
  EXPECT_EQ(degradation_coefficient(0, 1000), 0.0);
  EXPECT_EQ(degradation_coefficient(1000, 1000), 1.0);
  EXPECT_NEAR(degradation_coefficient(333, 999), 0.5, 1e-12);
  EXPECT_NEAR(degradation_coefficient(100, 300), 0.5, 1e-12);
  EXPECT_THROW(degradation_coefficient(-1, 10), ContractError);
  EXPECT_THROW(degradation_coefficient(11, 10), ContractError);
}

TEST(DegradationSchedule, TableMonotone) {
  DegradationSchedule d(1000);
  EXPECT_EQ(d.steps(), 1000);
  EXPECT_EQ(d(0), 0.0);
  EXPECT_EQ(d(1000), 1.0);
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_GE(d(t), d(t - 1));
    EXPECT_EQ(d(t), std::sin(t / 1000.0 * std::acos(-1.0) / 2.0));
  }
}

}  // namespace
}  // namespace diffqa
