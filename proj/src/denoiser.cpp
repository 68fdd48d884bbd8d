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

#include "diffqa/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "diffqa/errors.hpp"

namespace diffqa {

void FixedNoise::fill(std::span<float> out) {
  if (pattern_.empty()) {
    std::fill(out.begin(), out.end(), 0.0f);
    return;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pattern_[i % pattern_.size()];
}

void DiffusionConfig::validate() const {
  DIFFQA_REQUIRE(T >= 1, "diffusion: T must be positive");
  DIFFQA_REQUIRE(T_prime >= 1 && T_prime < T, "diffusion: need 1 <= T' < T");
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& cfg_get(const std::map<std::string, std::string>& cfg, const std::string& key) {
  auto it = cfg.find(key);
  if (it == cfg.end()) throw ContractError("checkpoint config is missing '" + key + "'");
  return it->second;
}

void check_step(int t, int max_step, const char* who) {
  if (t < 1 || t > max_step) {
    throw ContractError(std::string(who) + ": step " + std::to_string(t) + " outside [1, " + std::to_string(max_step) + "]");
  }
}

// Per-item scalars broadcast over [N, 1, 1, 1].
TensorF per_item(std::span<const double> v) {
  std::vector<float> d(v.begin(), v.end());
  return TensorF(Shape{v.size(), 1, 1, 1}, std::move(d));
}

}  // namespace

// ---------------------------------------------------------------------------
// DenoiserModel

DenoiserModel::DenoiserModel(UNetConfig net, DiffusionConfig diffusion, OutputConfig output, std::uint64_t seed)
    : net_(net), diffusion_(diffusion), output_(output) {
  net_.validate();
  diffusion_.validate();
  DIFFQA_REQUIRE(output_.sigma_data > 0.0, "denoiser: sigma_data must be positive");
  schedule_ = make_linear_schedule(diffusion_.T, diffusion_.beta_start, diffusion_.beta_end);
  params_ = init_unet(net_, seed);
  ema_ = params_;
  adam_ = AdamState<float>::zeros_like(params_);
}

Var DenoiserModel::build(Graph<float>& g, const ParameterSet<float>& p, Var x_t, std::span<const int> steps) const {
  const std::size_t n = g.value(x_t).dim(0);
  DIFFQA_REQUIRE(steps.size() == n, "denoiser: one step per batch item required");
  for (int t : steps) check_step(t, schedule_.steps(), "denoiser");
  if (!output_.input_skip) return unet_forward(g, p, net_, x_t, steps);
  std::vector<double> c_in(n), c_skip(n), c_out(n);
  const double sd2 = output_.sigma_data * output_.sigma_data;
  for (std::size_t i = 0; i < n; ++i) {
    const double ab = schedule_.alpha_bar(steps[i]);
    const double s2 = schedule_.one_minus_alpha_bar(steps[i]) / ab;
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
    c_in[i] = inv_sqrt_ab / std::sqrt(s2 + sd2);
    c_skip[i] = inv_sqrt_ab * sd2 / (s2 + sd2);
    c_out[i] = std::sqrt(s2) * output_.sigma_data / std::sqrt(s2 + sd2);
  }
  Var inp = g.mul(x_t, g.constant(per_item(c_in)));
  Var body = unet_forward(g, p, net_, inp, steps);
  return g.add(g.mul(x_t, g.constant(per_item(c_skip))), g.mul(body, g.constant(per_item(c_out))));
}

double DenoiserModel::step_weight(int t) const {
  check_step(t, diffusion_.T_prime, "step_weight");
  const double sd2 = output_.sigma_data * output_.sigma_data;
  auto inv_gain = [&](int s) {
    const double s2 = schedule_.one_minus_alpha_bar(s) / schedule_.alpha_bar(s);
    return (s2 + sd2) / (s2 * sd2);
  };
  double total = 0.0;
  for (int s = 1; s <= diffusion_.T_prime; ++s) total += inv_gain(s);
  return inv_gain(t) * diffusion_.T_prime / total;
}

Var DenoiserModel::build_prediction(Graph<float>& g, Var x_t, std::span<const int> steps) const {
  return build(g, params_, x_t, steps);
}

TensorF DenoiserModel::predict_x0_raw(const TensorF& x_t, std::span<const int> steps) const {
  return predict_x0_raw(x_t, steps, use_ema_);
}

TensorF DenoiserModel::predict_x0_raw(const TensorF& x_t, std::span<const int> steps, bool use_ema) const {
  Graph<float> g(false);
  Var out = build(g, use_ema ? ema_ : params_, g.constant(x_t), steps);
  return g.value(out);
}

TensorTable DenoiserModel::to_table() const {
  TensorTable t;
  t.put_params("live/", params_);
  t.put_params("ema/", ema_);
  t.put_params("adam.m/", adam_.m);
  t.put_params("adam.v/", adam_.v);
  const auto vec = [](const std::vector<double>& v) { return TensorD(Shape{v.size()}, v); };
  t.put("schedule/beta", vec(schedule_.betas()));
  t.put("schedule/alpha_bar", vec(schedule_.alpha_bars()));
  t.put("schedule/beta_tilde", vec(schedule_.beta_tildes()));
  auto& c = t.config();
  c["kind"] = "denoiser";
  c["unet.image_size"] = std::to_string(net_.image_size);
  c["unet.channels"] = std::to_string(net_.channels);
  c["unet.base_channels"] = std::to_string(net_.base_channels);
  c["unet.depth"] = std::to_string(net_.depth);
  c["unet.groups"] = std::to_string(net_.groups);
  c["unet.time_dim"] = std::to_string(net_.time_dim);
  c["diffusion.T"] = std::to_string(diffusion_.T);
  c["diffusion.T_prime"] = std::to_string(diffusion_.T_prime);
  c["diffusion.beta_start"] = fmt_double(diffusion_.beta_start);
  c["diffusion.beta_end"] = fmt_double(diffusion_.beta_end);
  c["output.input_skip"] = output_.input_skip ? "1" : "0";
  c["output.sigma_data"] = fmt_double(output_.sigma_data);
  c["adam.step"] = std::to_string(adam_.step);
  c["epochs_done"] = std::to_string(epochs_done_);
  return t;
}

DenoiserModel DenoiserModel::from_table(const TensorTable& table) {
  const auto& c = table.config();
  if (c.count("kind") == 0 || c.at("kind") != "denoiser") throw ContractError("checkpoint is not a denoiser");
  UNetConfig net;
  net.image_size = std::stoul(cfg_get(c, "unet.image_size"));
  net.channels = std::stoul(cfg_get(c, "unet.channels"));
  net.base_channels = std::stoul(cfg_get(c, "unet.base_channels"));
  net.depth = std::stoul(cfg_get(c, "unet.depth"));
  net.groups = std::stoul(cfg_get(c, "unet.groups"));
  net.time_dim = std::stoul(cfg_get(c, "unet.time_dim"));
  DiffusionConfig diff;
  diff.T = std::stoi(cfg_get(c, "diffusion.T"));
  diff.T_prime = std::stoi(cfg_get(c, "diffusion.T_prime"));
  diff.beta_start = std::stod(cfg_get(c, "diffusion.beta_start"));
  diff.beta_end = std::stod(cfg_get(c, "diffusion.beta_end"));
  OutputConfig out;
  out.input_skip = cfg_get(c, "output.input_skip") == "1";
  out.sigma_data = std::stod(cfg_get(c, "output.sigma_data"));
  DenoiserModel m(net, diff, out, 0);
  auto live = table.params("live/");
  auto ema = table.params("ema/");
  auto am = table.params("adam.m/");
  auto av = table.params("adam.v/");
  if (!live.congruent(m.params_) || !ema.congruent(m.params_) || !am.congruent(m.params_) || !av.congruent(m.params_)) {
    throw ContractError("checkpoint tensors do not match the recorded architecture");
  }
  if (table.f64("schedule/beta").vec() != m.schedule_.betas() ||
      table.f64("schedule/alpha_bar").vec() != m.schedule_.alpha_bars() ||
      table.f64("schedule/beta_tilde").vec() != m.schedule_.beta_tildes()) {
    throw ContractError("checkpoint schedule arrays disagree with the recorded schedule parameters");
  }
  m.params_ = std::move(live);
  m.ema_ = std::move(ema);
  m.adam_.m = std::move(am);
  m.adam_.v = std::move(av);
  m.adam_.step = std::stoll(cfg_get(c, "adam.step"));
  m.epochs_done_ = std::stoi(cfg_get(c, "epochs_done"));
  return m;
}

// ---------------------------------------------------------------------------
// Forward process

NoisedImage forward_noise(const Image& x, int t, const NoiseSchedule& schedule, Rng& rng) {
  check_step(t, schedule.steps(), "forward_noise");
  Image eps(x.height(), x.width(), x.channels());
  rng.fill_normal(eps.pixels());
  return NoisedImage{forward_noise_with(x, t, schedule, eps), std::move(eps)};
}

Image forward_noise_with(const Image& x, int t, const NoiseSchedule& schedule, const Image& eps) {
  check_step(t, schedule.steps(), "forward_noise");
  if (!x.same_geometry(eps)) throw ShapeError("forward_noise", "noise geometry differs from image");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(schedule.one_minus_alpha_bar(t));
  Image out(x.height(), x.width(), x.channels());
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = static_cast<float>(a * x.pixels()[i] + b * eps.pixels()[i]);
  return out;
}

TensorF forward_noise_batch(const TensorF& x, int t, const NoiseSchedule& schedule,
                            std::span<NoiseSource* const> noise) {
  check_step(t, schedule.steps(), "forward_noise");
  DIFFQA_REQUIRE(x.rank() == 4 && noise.size() == x.dim(0), "forward_noise: one noise source per batch item");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(schedule.one_minus_alpha_bar(t));
  const std::size_t per = x.size() / x.dim(0);
  TensorF out(x.shape());
  std::vector<float> eps(per);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    noise[n]->fill(eps);
    for (std::size_t i = 0; i < per; ++i) out[n * per + i] = static_cast<float>(a * x[n * per + i] + b * eps[i]);
  }
  return out;
}

Image forward_noise_chain(const Image& x, int t, const NoiseSchedule& schedule, Rng& rng) {
  check_step(t, schedule.steps(), "forward_noise_chain");
  std::vector<double> cur(x.pixels().begin(), x.pixels().end());
  for (int s = 1; s <= t; ++s) {
    const double a = std::sqrt(schedule.alpha(s));
    const double b = std::sqrt(schedule.beta(s));
    for (auto& v : cur) v = a * v + b * rng.normal();
  }
  std::vector<float> out(cur.begin(), cur.end());
  return Image(x.height(), x.width(), x.channels(), std::move(out));
}

// ---------------------------------------------------------------------------
// Backward process

Image predict_x0(const Denoiser& model, const Image& x_t, int t) {
  check_step(t, model.max_step(), "predict_x0");
  const int steps[1] = {t};
  TensorF out = model.predict_x0_raw(to_batch(x_t), steps);
  for (auto& v : out.data()) v = std::clamp(v, -1.0f, 1.0f);
  return from_batch(out, 0);
}

TensorF backward_restore_batch(const Denoiser& model, const TensorF& x_t, int t,
                               std::span<NoiseSource* const> noise) {
  check_step(t, model.max_step(), "backward_restore");
  DIFFQA_REQUIRE(x_t.rank() == 4 && noise.size() == x_t.dim(0), "backward_restore: one noise source per batch item");
  const NoiseSchedule& sch = model.schedule();
  const std::size_t n = x_t.dim(0), per = x_t.size() / n;
  TensorF x = x_t;
  std::vector<float> z(per);
  for (int s = t; s >= 1; --s) {
    const std::vector<int> steps(n, s);
    TensorF x0 = model.predict_x0_raw(x, steps);
    if (x0.shape() != x.shape()) throw ShapeError("backward_restore", "denoiser changed the batch shape");
    const double c0 = sch.posterior_coef_x0(s);
    const double ct = sch.posterior_coef_xt(s);
    const double sd = std::sqrt(sch.beta_tilde(s));
    for (std::size_t b = 0; b < n; ++b) {
      if (s > 1) noise[b]->fill(z);
      for (std::size_t i = 0; i < per; ++i) {
        const std::size_t k = b * per + i;
        const double mu = c0 * std::clamp(x0[k], -1.0f, 1.0f) + ct * x[k];
        x[k] = static_cast<float>(s > 1 ? mu + sd * z[i] : mu);
      }
    }
  }
  return x;
}

Image backward_restore(const Denoiser& model, const Image& x_t, int t, NoiseSource& noise) {
  NoiseSource* src[1] = {&noise};
  return from_batch(backward_restore_batch(model, to_batch(x_t), t, src), 0);
}

Image backward_restore(const Denoiser& model, const Image& x_t, int t, Rng& rng) {
  GaussianNoise noise(rng.engine()());
  return backward_restore(model, x_t, t, noise);
}

// ---------------------------------------------------------------------------
// Training

EpochStats train_epoch(DenoiserModel& model, std::span<const Image> dataset, const TrainConfig& cfg, Rng& rng) {
  DIFFQA_REQUIRE(!dataset.empty(), "train_epoch: empty dataset");
  DIFFQA_REQUIRE(cfg.batch_size >= 1, "train_epoch: batch_size must be positive");
  const DiffusionConfig& dc = model.diffusion_config();
  dc.validate();
  const NoiseSchedule& sch = model.schedule();
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());

  EpochStats stats;
  double loss_sum = 0.0, mse_sum = 0.0;
  AdamConfig adam;
  adam.lr = cfg.lr;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::vector<Image> clean, noisy;
    std::vector<int> steps;
    for (std::size_t i = start; i < end; ++i) {
      Image x = dataset[order[i]];
      if (cfg.random_flip && rng.bernoulli(0.5)) x = mirror(x);
      const int t = static_cast<int>(rng.uniform_int(1, dc.T_prime));
      Image target = x;
      if (cfg.use_degradation) target = mix_degraded(x, degrade(x, cfg.degradation, rng), t, dc.T);
      noisy.push_back(forward_noise(target, t, sch, rng).x_t);
      clean.push_back(x);
      steps.push_back(t);
    }
    Graph<float> g;
    Var pred = model.build_prediction(g, g.constant(to_batch(noisy)), steps);
    Var target = g.constant(to_batch(clean));
    Var loss = g.mse(pred, target);
    const double plain = g.value(loss).item();
    double lv = plain;
    if (cfg.balance_steps) {
      std::vector<double> w;
      for (int t : steps) w.push_back(model.step_weight(t));
      Var d = g.sub(pred, target);
      Var weighted = g.mean(g.mul(g.mul(d, d), g.constant(per_item(w))));
      lv = g.value(weighted).item();
      loss = weighted;
    }
    if (!std::isfinite(lv)) {
      throw NumericError("train_epoch: non-finite loss in batch " + std::to_string(stats.batches) + " of epoch " +
                         std::to_string(model.epochs_done()));
    }
    g.backward(loss);
    adam_step(model.params(), g.parameter_grads(), model.optimizer_state(), adam);
    ema_update(model.ema_params(), model.params(), cfg.ema_decay);
    loss_sum += lv;
    mse_sum += plain;
    ++stats.batches;
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.batches);
  stats.mean_mse = mse_sum / static_cast<double>(stats.batches);
  model.set_epochs_done(model.epochs_done() + 1);
  return stats;
}

double evaluate_loss(const DenoiserModel& model, std::span<const Image> images, int t, std::uint64_t seed,
                     bool use_ema) {
  DIFFQA_REQUIRE(!images.empty(), "evaluate_loss: no images");
  check_step(t, model.max_step(), "evaluate_loss");
  Rng rng(seed);
  std::vector<Image> noisy;
  for (const auto& x : images) noisy.push_back(forward_noise(x, t, model.schedule(), rng).x_t);
  const std::vector<int> steps(images.size(), t);
  TensorF pred = model.predict_x0_raw(to_batch(noisy), steps, use_ema);
  TensorF clean = to_batch(images);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - clean[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

}  // namespace diffqa
