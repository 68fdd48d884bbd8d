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

#include <span>
#include <vector>

namespace diffqa {

double mean(std::span<const double> x);
/// Unbiased sample variance; needs at least two values.
double sample_variance(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
/// Ranks starting at 1, ties receive the average of their positions.
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace diffqa
