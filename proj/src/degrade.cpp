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

#include "diffqa/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "diffqa/errors.hpp"
#include "diffqa/schedule.hpp"

namespace diffqa {

void DegradationConfig::validate() const {
  DIFFQA_REQUIRE(blur_sigma_range[0] >= 0.0 && blur_sigma_range[0] <= blur_sigma_range[1],
                 "degradation: blur_sigma_range must be ordered and non-negative");
  DIFFQA_REQUIRE(noise_sigma_range[0] >= 0.0 && noise_sigma_range[0] <= noise_sigma_range[1],
                 "degradation: noise_sigma_range must be ordered and non-negative");
  DIFFQA_REQUIRE(!downscale_factors.empty(), "degradation: downscale_factors must not be empty");
  for (int f : downscale_factors) DIFFQA_REQUIRE(f >= 1, "degradation: downscale factors must be >= 1");
  DIFFQA_REQUIRE(block_size >= 1, "degradation: block_size must be >= 1");
  DIFFQA_REQUIRE(per_op_probability >= 0.0 && per_op_probability <= 1.0,
                 "degradation: per_op_probability must lie in [0, 1]");
}

Image gaussian_blur(const Image& x, double sigma) {
  DIFFQA_REQUIRE(sigma >= 0.0, "gaussian_blur: sigma must be non-negative");
  if (sigma < 0.5) return x;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= norm;

  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  const std::size_t C = x.channels();
  Image tmp(x.height(), x.width(), C);
  Image out(x.height(), x.width(), C);
  for (long y = 0; y < H; ++y)
    for (long xx = 0; xx < W; ++xx)
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sx = std::clamp(xx + i, 0L, W - 1);
          s += k[static_cast<std::size_t>(i + radius)] * x.at(static_cast<std::size_t>(y), static_cast<std::size_t>(sx), c);
        }
        tmp.at(static_cast<std::size_t>(y), static_cast<std::size_t>(xx), c) = static_cast<float>(s);
      }
  for (long y = 0; y < H; ++y)
    for (long xx = 0; xx < W; ++xx)
      for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const long sy = std::clamp(y + i, 0L, H - 1);
          s += k[static_cast<std::size_t>(i + radius)] * tmp.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(xx), c);
        }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(xx), c) = static_cast<float>(s);
      }
  return out;
}

Image resample(const Image& x, int factor) {
  DIFFQA_REQUIRE(factor >= 1, "resample: factor must be >= 1");
  const std::size_t f = static_cast<std::size_t>(factor);
  if (x.height() < f || x.width() < f) {
    throw ContractError("resample: image " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                        " smaller than downscale factor " + std::to_string(factor));
  }
  if (factor == 1) return x;
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  const std::size_t h = H / f, w = W / f;
  Image small(h, w, C);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t y0 = y * H / h, y1 = (y + 1) * H / h;
        const std::size_t x0 = xx * W / w, x1 = (xx + 1) * W / w;
        double s = 0.0;
        for (std::size_t sy = y0; sy < y1; ++sy)
          for (std::size_t sx = x0; sx < x1; ++sx) s += x.at(sy, sx, c);
        small.at(y, xx, c) = static_cast<float>(s / static_cast<double>((y1 - y0) * (x1 - x0)));
      }
  Image out(H, W, C);
  for (std::size_t y = 0; y < H; ++y) {
    const double sy = std::clamp((y + 0.5) * static_cast<double>(h) / H - 0.5, 0.0, static_cast<double>(h - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy), y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - y0;
    for (std::size_t xx = 0; xx < W; ++xx) {
      const double sx = std::clamp((xx + 0.5) * static_cast<double>(w) / W - 0.5, 0.0, static_cast<double>(w - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx), x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - x0;
      for (std::size_t c = 0; c < C; ++c) {
        const double top = (1 - fx) * small.at(y0, x0, c) + fx * small.at(y0, x1, c);
        const double bot = (1 - fx) * small.at(y1, x0, c) + fx * small.at(y1, x1, c);
        out.at(y, xx, c) = static_cast<float>((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

Image add_gaussian_noise(const Image& x, double sigma_8bit, Rng& rng) {
  DIFFQA_REQUIRE(sigma_8bit >= 0.0, "add_gaussian_noise: sigma must be non-negative");
  const double sigma = sigma_8bit * 2.0 / 255.0;
  Image out = x;
  for (auto& v : out.pixels()) v = static_cast<float>(v + sigma * rng.normal());
  return out;
}

Image block_quantize(const Image& x, int block) {
  DIFFQA_REQUIRE(block >= 1, "block_quantize: block size must be >= 1");
  if (block == 1) return x;
  const std::size_t b = static_cast<std::size_t>(block);
  Image out(x.height(), x.width(), x.channels());
  for (std::size_t by = 0; by < x.height(); by += b)
    for (std::size_t bx = 0; bx < x.width(); bx += b)
      for (std::size_t c = 0; c < x.channels(); ++c) {
        const std::size_t ye = std::min(by + b, x.height()), xe = std::min(bx + b, x.width());
        double s = 0.0;
        for (std::size_t y = by; y < ye; ++y)
          for (std::size_t xx = bx; xx < xe; ++xx) s += x.at(y, xx, c);
        const float m = static_cast<float>(s / static_cast<double>((ye - by) * (xe - bx)));
        for (std::size_t y = by; y < ye; ++y)
          for (std::size_t xx = bx; xx < xe; ++xx) out.at(y, xx, c) = m;
      }
  return out;
}

Image degrade(const Image& x, const DegradationConfig& cfg, Rng& rng) {
  cfg.validate();
  const int max_factor = *std::max_element(cfg.downscale_factors.begin(), cfg.downscale_factors.end());
  if (x.height() < static_cast<std::size_t>(max_factor) || x.width() < static_cast<std::size_t>(max_factor)) {
    throw ContractError("degrade: image smaller than the largest downscale factor " + std::to_string(max_factor));
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng.engine());
  Image out = x;
  for (int op : order) {
    if (!rng.bernoulli(cfg.per_op_probability)) continue;
    switch (op) {
      case 0: out = gaussian_blur(out, rng.uniform(cfg.blur_sigma_range[0], cfg.blur_sigma_range[1])); break;
      case 1: {
        const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(cfg.downscale_factors.size()) - 1);
        out = resample(out, cfg.downscale_factors[static_cast<std::size_t>(idx)]);
        break;
      }
      case 2: out = add_gaussian_noise(out, rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]), rng); break;
      default: out = block_quantize(out, cfg.block_size); break;
    }
  }
  clamp_canonical(out);
  return out;
}

Image degrade(const Image& x, const DegradationConfig& cfg) {
  Rng rng(cfg.seed);
  return degrade(x, cfg, rng);
}

Image mix_degraded(const Image& x0, const Image& x_prime, int t, int T) {
  if (!x0.same_geometry(x_prime)) throw ShapeError("mix_degraded", "clean and degraded images differ in geometry");
  const double a = degradation_coefficient(t, T);
  Image out(x0.height(), x0.width(), x0.channels());
  const auto p0 = x0.pixels();
  const auto p1 = x_prime.pixels();
  auto po = out.pixels();
  for (std::size_t i = 0; i < po.size(); ++i) {
    po[i] = static_cast<float>((1.0 - a) * p0[i] + a * p1[i]);
  }
  return out;
}

}  // namespace diffqa
