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
#include <limits>

#include "diffqa/optim.hpp"

namespace diffqa {
namespace {

ParameterSet<double> scalar_param(double v) {
  ParameterSet<double> p;
  p.add("x", TensorD::scalar(v));
  return p;
}

GradientMap<double> scalar_grad(double v) {
  GradientMap<double> g;
  g.emplace("x", TensorD::scalar(v));
  return g;
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto p = scalar_param(1.25);
  auto st = AdamState<double>::zeros_like(p);
  for (int i = 0; i < 5; ++i) adam_step(p, scalar_grad(0.0), st, AdamConfig{0.1});
  EXPECT_EQ(p.get("x").item(), 1.25);
  EXPECT_EQ(st.step, 5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = scalar_param(0.0);
  auto st = AdamState<double>::zeros_like(p);
  adam_step(p, scalar_grad(1.0), st, AdamConfig{0.1});
  // 0.1 * 1 / (1 + 1e-8)
  EXPECT_NEAR(p.get("x").item(), -0.1, 1e-8);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, QuadraticDecreasesMonotonically) {
  auto p = scalar_param(5.0);
  auto st = AdamState<double>::zeros_like(p);
  double prev = 25.0;
  for (int i = 0; i < 100; ++i) {
    const double x = p.get("x").item();
    adam_step(p, scalar_grad(2.0 * x), st, AdamConfig{0.01});
    const double loss = p.get("x").item() * p.get("x").item();
    EXPECT_LT(loss, prev) << "step " << i;
    prev = loss;
  }
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterSet<double> p;
  p.add("alpha", TensorD::scalar(1.0));
  p.add("beta", TensorD::scalar(2.0));
  auto st = AdamState<double>::zeros_like(p);
  GradientMap<double> g;
  g.emplace("alpha", TensorD::scalar(1.0));
  g.emplace("beta", TensorD::scalar(std::numeric_limits<double>::quiet_NaN()));
  try {
    adam_step(p, g, st, AdamConfig{0.1});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos);
  }
  EXPECT_EQ(p.get("alpha").item(), 1.0);
  EXPECT_EQ(st.step, 0);
}

TEST(Adam, ShapeMismatchRejected) {
  auto p = scalar_param(0.0);
  auto st = AdamState<double>::zeros_like(p);
  GradientMap<double> g;
  g.emplace("x", TensorD(Shape{2}, 1.0));
  EXPECT_THROW(adam_step(p, g, st, AdamConfig{0.1}), ShapeError);
}

TEST(Ema, ZeroDecayCopiesLive) {
  auto ema = scalar_param(3.0);
  ema_update(ema, scalar_param(-2.0), 0.0);
  EXPECT_EQ(ema.get("x").item(), -2.0);
}

TEST(Ema, SingleStepFormula) {
  auto ema = scalar_param(0.0);
  ema_update(ema, scalar_param(1.0), 0.995);
  EXPECT_NEAR(ema.get("x").item(), 0.005, 1e-15);
}

TEST(Ema, ConvergesToFixedLive) {
  auto ema = scalar_param(0.0);
  const auto live = scalar_param(1.0);
  // 0.995^k < 1e-6 for k > ln(1e-6) / ln(0.995) ~ 2757
  for (int k = 0; k < 2800; ++k) ema_update(ema, live, 0.995);
  EXPECT_NEAR(ema.get("x").item(), 1.0, 1e-6);
  EXPECT_NEAR(ema.get("x").item(), 1.0 - std::pow(0.995, 2800), 1e-9);
}

TEST(Ema, DecayOutOfRangeRejected) {
  auto ema = scalar_param(0.0);
  EXPECT_THROW(ema_update(ema, scalar_param(1.0), 1.0), ContractError);
  EXPECT_THROW(ema_update(ema, scalar_param(1.0), -0.1), ContractError);
}

}  // namespace
}  // namespace diffqa
