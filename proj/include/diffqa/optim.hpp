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

#include "diffqa/autograd.hpp"

namespace diffqa {

struct AdamConfig {
  double lr = 8.0e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates per parameter plus the shared step counter.
template <typename T>
struct AdamState {
  ParameterSet<T> m;
  ParameterSet<T> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ParameterSet<T>& params);
};

/// Bias-corrected Adam update. Parameters without an entry in `grads` are left
/// untouched. Throws NumericError naming the first parameter whose gradient is
/// not finite; in that case nothing is modified.
template <typename T>
void adam_step(ParameterSet<T>& params, const GradientMap<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg);

/// ema <- decay * ema + (1 - decay) * live, elementwise. Requires 0 <= decay < 1.
template <typename T>
void ema_update(ParameterSet<T>& ema, const ParameterSet<T>& live, double decay);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace diffqa
