// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxsyn/autoencoder/vae.hpp"
#include "voxsyn/diffusion/denoiser.hpp"
#include "voxsyn/diffusion/schedule.hpp"

namespace voxsyn::diffusion {

enum class VarianceKind { posterior, beta };

/// RNG streams used by the samplers, exposed so oracle tests can replay the
/// exact draws: one stream seeds z_T, one per-timestep stream drives the
/// injected noise of ddpm_step.
Rng sample_init_rng(uint64_t seed);
Rng step_noise_rng(uint64_t seed, int64_t t);

/// Training-loop streams (timestep draw and corruption noise per step),
/// exposed so evaluation-only replays can reproduce a training trajectory.
Rng train_timestep_rng(uint64_t seed, int64_t epoch, int64_t step);
Rng train_noise_rng(uint64_t seed, int64_t epoch, int64_t step);

/// sigma_t^2: posterior (beta-tilde) by default, plain beta_t behind the flag.
double step_sigma(const NoiseSchedule& schedule, int64_t t, VarianceKind kind);

/// Posterior mean: (1/sqrt(alpha_t)) * (z_t - beta_t / sqrt(1-alpha_bar_t) * eps).
nn::Tensor ddpm_mean(const nn::Tensor& z_t, const nn::Tensor& eps, int64_t t,
                     const NoiseSchedule& schedule);

/// One ancestral update; injects sigma_t * eta for t > 1 (eta drawn from
/// seed), returns the mean exactly at t == 1.
nn::Tensor ddpm_step(NoisePredictor& model, const nn::Tensor& z_t, int64_t t,
                     const NoiseSchedule& schedule, uint64_t seed,
                     VarianceKind variance = VarianceKind::posterior);

/// Full reverse chain from z_T ~ N(0,I): deterministic given seed. Invokes
/// the predictor exactly T times.
nn::Tensor sample_latent(NoisePredictor& model, const NoiseSchedule& schedule,
                         const nn::ShapeVec& shape, uint64_t seed,
                         VarianceKind variance = VarianceKind::posterior);

/// MSE between noise and model prediction on q_sample(z0, t, noise).
double diffusion_loss(NoisePredictor& model, const nn::Tensor& z0, int64_t t,
                      const nn::Tensor& noise, const NoiseSchedule& schedule);

/// Graph version used for training and gradient checks.
nn::Var diffusion_loss_graph(const Denoiser& model, const nn::Tensor& z0, int64_t t,
                             const nn::Tensor& noise, const NoiseSchedule& schedule);

/// Uniform timestep draw in [1, T].
int64_t sample_timestep(Rng& rng, int64_t T);

struct DiffusionTrainSettings {
    int64_t epochs = 50;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
};

struct DiffusionTrainResult {
    std::vector<double> loss_history;  // per-epoch mean loss
};

/// Optimizes diffusion_loss over uniformly sampled t on pre-encoded (already
/// scaled) latents. Deterministic per seed.
DiffusionTrainResult train_diffusion(Denoiser& model, const std::vector<nn::Tensor>& latents,
                                     const NoiseSchedule& schedule,
                                     const DiffusionTrainSettings& settings);

/// Encodes inputs through the frozen VAE (posterior means), computes the
/// latent scale factor, and returns the scaled latents.
std::vector<nn::Tensor> encode_latents(const autoencoder::Vae& vae,
                                       const std::vector<nn::Tensor>& inputs,
                                       double* scale_out);

orch::Checkpoint make_diffusion_checkpoint(const Denoiser& model,
                                           const NoiseSchedule& schedule,
                                           double latent_scale,
                                           const nn::ShapeVec& latent_shape,
                                           const DiffusionTrainResult& result,
                                           const std::string& vae_hash);
Denoiser denoiser_from_checkpoint(const orch::Checkpoint& ckpt);
NoiseSchedule schedule_from_checkpoint(const orch::Checkpoint& ckpt);
nn::ShapeVec latent_shape_from_checkpoint(const orch::Checkpoint& ckpt);

}  // namespace voxsyn::diffusion
