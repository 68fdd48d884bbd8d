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
#include <span>

#include "diffqa/autograd.hpp"

namespace diffqa {

/// Encoder-decoder denoising network. `depth` stride-2 downsampling stages
/// each halve the spatial size and double the width; the decoder mirrors them
/// with nearest-neighbour upsampling and additive skip connections. The step
/// index enters through a sinusoidal embedding projected and added at every
/// resolution.
struct UNetConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t base_channels = 16;
  std::size_t depth = 2;
  std::size_t groups = 4;
  std::size_t time_dim = 32;

  void validate() const;
  std::size_t width(std::size_t level) const { return base_channels << level; }
};

/// Sinusoidal embedding of integer steps: [N, dim] with sin in the first half,
/// cos in the second.
TensorF time_embedding(std::span<const int> steps, std::size_t dim);

/// Fresh parameters; the output convolution starts at zero.
ParameterSet<float> init_unet(const UNetConfig& cfg, std::uint64_t seed);

/// Network body on an [N, C, S, S] input; returns an [N, C, S, S] output.
Var unet_forward(Graph<float>& g, const ParameterSet<float>& params, const UNetConfig& cfg, Var x,
                 std::span<const int> steps);

}  // namespace diffqa
