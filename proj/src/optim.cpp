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

#include "diffqa/optim.hpp"

#include <cmath>

namespace diffqa {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParameterSet<T>& params) {
  AdamState s;
  for (const auto& name : params.names()) {
    s.m.add(name, Tensor<T>(params.get(name).shape(), T(0)));
    s.v.add(name, Tensor<T>(params.get(name).shape(), T(0)));
  }
  return s;
}

template <typename T>
void adam_step(ParameterSet<T>& params, const GradientMap<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  DIFFQA_REQUIRE(state.m.congruent(params) && state.v.congruent(params),
                 "adam_step: optimizer state does not match parameters");
  for (const auto& [name, g] : grads) {
    DIFFQA_REQUIRE(params.contains(name), "adam_step: gradient for unknown parameter " + name);
    if (g.shape() != params.get(name).shape()) {
      throw ShapeError("adam_step", name + " gradient " + shape_str(g.shape()) + " vs parameter " +
                                        shape_str(params.get(name).shape()));
    }
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient for parameter " + name);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto p = params.get(name).data();
    auto m = state.m.get(name).data();
    auto v = state.v.get(name).data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gd[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1, vhat = vi / bc2;
      p[i] = static_cast<T>(p[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template <typename T>
void ema_update(ParameterSet<T>& ema, const ParameterSet<T>& live, double decay) {
  DIFFQA_REQUIRE(decay >= 0.0 && decay < 1.0, "ema_update: decay must lie in [0, 1)");
  DIFFQA_REQUIRE(ema.congruent(live), "ema_update: parameter sets are not congruent");
  for (const auto& name : live.names()) {
    auto e = ema.get(name).data();
    const auto l = live.get(name).data();
    for (std::size_t i = 0; i < e.size(); ++i) {
      e[i] = static_cast<T>(decay * e[i] + (1.0 - decay) * l[i]);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParameterSet<float>&, const GradientMap<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(ParameterSet<double>&, const GradientMap<double>&, AdamState<double>&, const AdamConfig&);
template void ema_update(ParameterSet<float>&, const ParameterSet<float>&, double);
template void ema_update(ParameterSet<double>&, const ParameterSet<double>&, double);

}  // namespace diffqa
