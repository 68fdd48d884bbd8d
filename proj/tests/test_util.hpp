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
#include <cstdint>
#include <filesystem>
#include <string>
#include <functional>
#include <vector>

#include "diffqa/autograd.hpp"
#include "diffqa/image.hpp"
#include "diffqa/rng.hpp"

namespace diffqa::testing {

inline TensorD random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  TensorD t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Entries moved at least `gap` away from zero (keeps finite differences off kinks).
inline TensorD away_from_zero(TensorD t, double gap = 1e-2) {
  for (auto& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

/// Builds a scalar from the given input nodes.
using ScalarFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

/// Largest relative error ||analytic - numeric|| / (||analytic|| + ||numeric||) over the inputs,
/// with central differences of step `eps`.
inline double gradient_error(const ScalarFn& f, const std::vector<TensorD>& inputs, double eps = 1e-5) {
  std::vector<TensorD> analytic;
  {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.variable(t));
    g.backward(f(g, vars));
    for (Var v : vars) analytic.push_back(g.grad(v));
  }
  auto eval = [&](const std::vector<TensorD>& in) {
    Graph<double> g(false);
    std::vector<Var> vars;
    for (const auto& t : in) vars.push_back(g.constant(t));
    return g.value(f(g, vars)).item();
  };
  double worst = 0.0;
  std::vector<TensorD> work = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = work[k][i];
      work[k][i] = x0 + eps;
      const double up = eval(work);
      work[k][i] = x0 - eps;
      const double down = eval(work);
      work[k][i] = x0;
      const double num = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      diff += (a - num) * (a - num);
      na += a * a;
      nn += num * num;
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    worst = std::max(worst, denom == 0.0 ? 0.0 : std::sqrt(diff) / denom);
  }
  return worst;
}

/// Weighted sum of every output element with fixed random weights.
inline Var project(Graph<double>& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return g.sum(g.mul(out, g.constant(random_tensor(g.value(out).shape(), rng))));
}

inline Image random_image(std::size_t size, std::size_t channels, Rng& rng) {
  Image img(size, size, channels);
  for (auto& p : img.pixels()) p = static_cast<float>(rng.uniform(-1.0, 1.0));
  return img;
}

/// Left-right symmetric image.
inline Image symmetric_image(std::size_t size, std::size_t channels, Rng& rng) {
  Image img = random_image(size, channels, rng);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size / 2; ++x)
      for (std::size_t c = 0; c < channels; ++c) img.at(y, size - 1 - x, c) = img.at(y, x, c);
  return img;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("diffqa_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace diffqa::testing
