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
#include <filesystem>
#include <span>
#include <vector>

#include "diffqa/autograd.hpp"
#include "diffqa/degrade.hpp"
#include "diffqa/image.hpp"
#include "diffqa/optim.hpp"
#include "diffqa/rng.hpp"
#include "diffqa/schedule.hpp"
#include "diffqa/tensor_table.hpp"
#include "diffqa/unet.hpp"

namespace diffqa {

/// Source of standard-normal draws for the stochastic diffusion steps. The
/// scorer and the samplers take one source per batch item so that results do
/// not depend on how items are grouped.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual void fill(std::span<float> out) = 0;
};

class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(std::uint64_t seed) : rng_(seed) {}
  void fill(std::span<float> out) override { rng_.fill_normal(out); }

 private:
  Rng rng_;
};

/// Deterministic hook: every draw is the same fixed pattern (zeros by default).
class FixedNoise final : public NoiseSource {
 public:
  FixedNoise() = default;
  explicit FixedNoise(std::vector<float> pattern) : pattern_(std::move(pattern)) {}
  void fill(std::span<float> out) override;

 private:
  std::vector<float> pattern_;
};

/// Anything that estimates the clean image from a noisy one.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual const NoiseSchedule& schedule() const = 0;
  /// Largest step the model is valid for (T').
  virtual int max_step() const = 0;
  /// Unclamped clean-image estimate for an [N, C, H, W] batch, one step per item.
  virtual TensorF predict_x0_raw(const TensorF& x_t, std::span<const int> steps) const = 0;
};

struct DiffusionConfig {
  int T = 1000;
  int T_prime = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  void validate() const;
};

/// Output scaling around the network body. With `input_skip` the prediction
/// is c_skip * y + c_out * F(c_in * y, t), where y = x_t / sqrt(alpha_bar) and
/// the coefficients depend on the noise level sigma^2 = (1 - alpha_bar) /
/// alpha_bar and the data scale `sigma_data`. Without it the network output
/// is the prediction.
struct OutputConfig {
  bool input_skip = true;
  double sigma_data = 0.5;
};

struct TrainConfig {
  double lr = 8.0e-5;
  std::size_t batch_size = 16;
  double ema_decay = 0.995;
  DegradationConfig degradation;
  bool use_degradation = true;
  /// Scales each item's squared error by the inverse output gain of the preconditioner,
  /// normalized to mean 1 over [1, T']. Off: plain mean squared error.
  bool balance_steps = false;
  /// Mirrors each training sample with probability 1/2.
  bool random_flip = false;
};

struct EpochStats {
  double mean_loss = 0.0;  // optimized objective
  double mean_mse = 0.0;   // unweighted reconstruction error
  std::size_t batches = 0;
};

/// UNet denoiser with live and EMA weights, its schedule and optimizer state.
class DenoiserModel final : public Denoiser {
 public:
  DenoiserModel(UNetConfig net, DiffusionConfig diffusion, OutputConfig output, std::uint64_t seed);

  const NoiseSchedule& schedule() const override { return schedule_; }
  int max_step() const override { return diffusion_.T_prime; }
  /// Uses EMA weights when `use_ema_for_inference()` (the default).
  TensorF predict_x0_raw(const TensorF& x_t, std::span<const int> steps) const override;
  TensorF predict_x0_raw(const TensorF& x_t, std::span<const int> steps, bool use_ema) const;

  /// Adds the prediction for x_t to graph g using the live parameters.
  Var build_prediction(Graph<float>& g, Var x_t, std::span<const int> steps) const;

  const UNetConfig& net_config() const noexcept { return net_; }
  const DiffusionConfig& diffusion_config() const noexcept { return diffusion_; }
  const OutputConfig& output_config() const noexcept { return output_; }
  /// Weight of step t under TrainConfig::balance_steps.
  double step_weight(int t) const;

  ParameterSet<float>& params() noexcept { return params_; }
  const ParameterSet<float>& params() const noexcept { return params_; }
  ParameterSet<float>& ema_params() noexcept { return ema_; }
  const ParameterSet<float>& ema_params() const noexcept { return ema_; }
  AdamState<float>& optimizer_state() noexcept { return adam_; }
  int epochs_done() const noexcept { return epochs_done_; }
  void set_epochs_done(int e) noexcept { epochs_done_ = e; }
  bool use_ema_for_inference() const noexcept { return use_ema_; }
  void set_use_ema_for_inference(bool v) noexcept { use_ema_ = v; }

  TensorTable to_table() const;
  static DenoiserModel from_table(const TensorTable& table);
  void save(const std::filesystem::path& path) const { to_table().save(path); }
  static DenoiserModel load(const std::filesystem::path& path) { return from_table(TensorTable::load(path)); }

 private:
  Var build(Graph<float>& g, const ParameterSet<float>& p, Var x_t, std::span<const int> steps) const;

  UNetConfig net_;
  DiffusionConfig diffusion_;
  OutputConfig output_;
  NoiseSchedule schedule_;
  ParameterSet<float> params_;
  ParameterSet<float> ema_;
  AdamState<float> adam_;
  int epochs_done_ = 0;
  bool use_ema_ = true;
};

struct NoisedImage {
  Image x_t;
  Image eps;
};

/// Closed-form forward diffusion: x_t = sqrt(alpha_bar) x + sqrt(1 - alpha_bar) eps.
NoisedImage forward_noise(const Image& x, int t, const NoiseSchedule& schedule, Rng& rng);
/// Same with caller-supplied eps (test hook).
Image forward_noise_with(const Image& x, int t, const NoiseSchedule& schedule, const Image& eps);
/// Batched closed form, one noise source per item.
TensorF forward_noise_batch(const TensorF& x, int t, const NoiseSchedule& schedule,
                            std::span<NoiseSource* const> noise);

/// Iterates q(x_s | x_{s-1}) for s = 1..t.
Image forward_noise_chain(const Image& x, int t, const NoiseSchedule& schedule, Rng& rng);

/// Clean-image estimate clamped to [-1, 1]. Requires 1 <= t <= max_step().
Image predict_x0(const Denoiser& model, const Image& x_t, int t);

/// Ancestral sampling from step t down to 0 with the x0 estimate substituted
/// into the posterior mean. The last step adds no noise.
Image backward_restore(const Denoiser& model, const Image& x_t, int t, Rng& rng);
Image backward_restore(const Denoiser& model, const Image& x_t, int t, NoiseSource& noise);
TensorF backward_restore_batch(const Denoiser& model, const TensorF& x_t, int t,
                               std::span<NoiseSource* const> noise);

/// One pass over `dataset` in shuffled minibatches: draw t in [1, T'], degrade,
/// mix by the degradation coefficient, noise in closed form, regress the clean
/// image; Adam step then EMA update per batch.
EpochStats train_epoch(DenoiserModel& model, std::span<const Image> dataset, const TrainConfig& cfg, Rng& rng);

/// Mean reconstruction loss of the given weights at a fixed step (no degradation).
double evaluate_loss(const DenoiserModel& model, std::span<const Image> images, int t, std::uint64_t seed,
                     bool use_ema = true);

}  // namespace diffqa
