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

#include "diffqa/unet.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "diffqa/rng.hpp"

namespace diffqa {

void UNetConfig::validate() const {
  DIFFQA_REQUIRE(channels >= 1 && base_channels >= 1 && time_dim >= 2 && time_dim % 2 == 0,
                 "unet: channels, base_channels must be positive and time_dim even");
  DIFFQA_REQUIRE(groups >= 1 && base_channels % groups == 0, "unet: base_channels must be divisible by groups");
  DIFFQA_REQUIRE(depth >= 1, "unet: depth must be at least 1");
  DIFFQA_REQUIRE(image_size % (std::size_t{1} << depth) == 0,
                 "unet: image_size must be divisible by 2^depth");
}

TensorF time_embedding(std::span<const int> steps, std::size_t dim) {
  DIFFQA_REQUIRE(dim >= 2 && dim % 2 == 0, "time_embedding: dim must be even");
  const std::size_t half = dim / 2;
  TensorF out(Shape{steps.size(), dim});
  for (std::size_t n = 0; n < steps.size(); ++n) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double a = steps[n] * freq;
      out[n * dim + i] = static_cast<float>(std::sin(a));
      out[n * dim + half + i] = static_cast<float>(std::cos(a));
    }
  }
  return out;
}

namespace {

TensorF he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  TensorF t(std::move(shape));
  const double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<float>(std * rng.normal());
  return t;
}

void add_conv(ParameterSet<float>& p, const std::string& name, std::size_t cin, std::size_t cout, Rng& rng,
              double gain = 1.0) {
  p.add(name + ".w", gain == 0.0 ? TensorF(Shape{cout, cin, 3, 3}, 0.0f) : he_normal(Shape{cout, cin, 3, 3}, cin * 9, rng, gain));
  p.add(name + ".b", TensorF(Shape{cout}, 0.0f));
}

void add_norm(ParameterSet<float>& p, const std::string& name, std::size_t c) {
  p.add(name + ".gamma", TensorF(Shape{c}, 1.0f));
  p.add(name + ".beta", TensorF(Shape{c}, 0.0f));
}

void add_dense(ParameterSet<float>& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.add(name + ".w", he_normal(Shape{in, out}, in, rng));
  p.add(name + ".b", TensorF(Shape{1, out}, 0.0f));
}

void add_resblock(ParameterSet<float>& p, const std::string& name, std::size_t c, std::size_t emb, Rng& rng) {
  add_norm(p, name + ".norm1", c);
  add_conv(p, name + ".conv1", c, c, rng);
  add_dense(p, name + ".temb", emb, c, rng);
  add_norm(p, name + ".norm2", c);
  add_conv(p, name + ".conv2", c, c, rng, 0.0);
}

struct Ctx {
  Graph<float>& g;
  const ParameterSet<float>& p;
  const UNetConfig& cfg;

  Var param(const std::string& n) { return g.parameter(p, n); }

  Var conv(const std::string& name, Var x, std::size_t stride = 1) {
    return g.conv2d(x, param(name + ".w"), param(name + ".b"), Conv2dOptions{stride, Padding::kSame});
  }
  Var dense(const std::string& name, Var x) { return g.add(g.matmul(x, param(name + ".w")), param(name + ".b")); }
  Var norm_act(const std::string& name, Var x) {
    return g.silu(g.group_norm(x, param(name + ".gamma"), param(name + ".beta"), cfg.groups));
  }

  Var resblock(const std::string& name, Var x, Var temb, std::size_t c) {
    Var h = conv(name + ".conv1", norm_act(name + ".norm1", x));
    const std::size_t rows = g.value(temb).dim(0);
    Var t = g.reshape(dense(name + ".temb", temb), Shape{rows, c, 1, 1});
    h = g.add(h, t);
    h = conv(name + ".conv2", norm_act(name + ".norm2", h));
    return g.add(x, h);
  }
};

}  // namespace

ParameterSet<float> init_unet(const UNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterSet<float> p;
  const std::size_t emb = 2 * cfg.time_dim;
  add_dense(p, "time.fc1", cfg.time_dim, emb, rng);
  add_dense(p, "time.fc2", emb, emb, rng);
  add_conv(p, "in", cfg.channels, cfg.width(0), rng);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string s = std::to_string(l);
    add_resblock(p, "down" + s + ".res", cfg.width(l), emb, rng);
    add_conv(p, "down" + s + ".pool", cfg.width(l), cfg.width(l + 1), rng);
  }
  add_resblock(p, "mid.res", cfg.width(cfg.depth), emb, rng);
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::string s = std::to_string(l);
    add_conv(p, "up" + s + ".conv", cfg.width(l + 1), cfg.width(l), rng);
    add_resblock(p, "up" + s + ".res", cfg.width(l), emb, rng);
  }
  add_norm(p, "out.norm", cfg.width(0));
  add_conv(p, "out", cfg.width(0), cfg.channels, rng, 0.0);
  return p;
}

Var unet_forward(Graph<float>& g, const ParameterSet<float>& params, const UNetConfig& cfg, Var x,
                 std::span<const int> steps) {
  const Shape& xs = g.value(x).shape();
  if (xs.size() != 4 || xs[1] != cfg.channels || xs[2] != cfg.image_size || xs[3] != cfg.image_size) {
    throw ShapeError("unet_forward", "input " + shape_str(xs) + " for image_size " + std::to_string(cfg.image_size) +
                                         " with " + std::to_string(cfg.channels) + " channel(s)");
  }
  DIFFQA_REQUIRE(steps.size() == xs[0], "unet_forward: one step index per batch item required");
  Ctx c{g, params, cfg};
  // A batch sharing one step evaluates the time MLP once and broadcasts it.
  const bool shared = std::all_of(steps.begin(), steps.end(), [&](int t) { return t == steps[0]; });
  Var temb = g.constant(time_embedding(shared ? steps.first(1) : steps, cfg.time_dim));
  temb = c.dense("time.fc2", g.silu(c.dense("time.fc1", temb)));

  Var h = c.conv("in", x);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string s = std::to_string(l);
    h = c.resblock("down" + s + ".res", h, temb, cfg.width(l));
    skips.push_back(h);
    h = c.conv("down" + s + ".pool", h, 2);
  }
  h = c.resblock("mid.res", h, temb, cfg.width(cfg.depth));
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::string s = std::to_string(l);
    h = c.conv("up" + s + ".conv", g.upsample2x(h));
    h = g.add(h, skips[l]);
    h = c.resblock("up" + s + ".res", h, temb, cfg.width(l));
  }
  return c.conv("out", c.norm_act("out.norm", h));
}

}  // namespace diffqa
