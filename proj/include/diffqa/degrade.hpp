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

#include <array>
#include <cstdint>
#include <vector>

#include "diffqa/image.hpp"
#include "diffqa/rng.hpp"

namespace diffqa {

/// Parameters of the random degradation d(x): a shuffled sequence of
/// Gaussian blur, down-then-up resampling, additive Gaussian noise and
/// block-mean quantization, each included independently.
struct DegradationConfig {
  std::array<double, 2> blur_sigma_range{0.5, 1.5};     // pixels
  std::vector<int> downscale_factors{2, 4};
  std::array<double, 2> noise_sigma_range{2.0, 20.0};   // 8-bit units
  int block_size = 2;
  double per_op_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Separable Gaussian blur, kernel truncated at 3 sigma and renormalized,
/// edge-replicating borders. Kernels narrower than half a pixel collapse to
/// the identity.
Image gaussian_blur(const Image& x, double sigma);
/// Box-average downscale by `factor`, then bilinear upscale to the input size.
Image resample(const Image& x, int factor);
/// Adds N(0, sigma^2) noise; sigma in 8-bit units.
Image add_gaussian_noise(const Image& x, double sigma_8bit, Rng& rng);
/// Replaces every block x block tile by its mean.
Image block_quantize(const Image& x, int block);

/// Random degradation. Output has the input's geometry, clamped to [-1, 1].
Image degrade(const Image& x, const DegradationConfig& cfg, Rng& rng);
/// Same, seeded from cfg.seed.
Image degrade(const Image& x, const DegradationConfig& cfg);

/// (1 - a) * x0 + a * x_prime with a = degradation_coefficient(t, T).
Image mix_degraded(const Image& x0, const Image& x_prime, int t, int T);

}  // namespace diffqa
