// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/diffusion/ddpm.hpp"

#include <cmath>

#include <json.hpp>

namespace voxsyn::diffusion {

using nn::Tensor;
using nn::Var;

namespace {
constexpr uint64_t kTagSampleInit = 0x73616d70ull;
constexpr uint64_t kTagStepNoise = 0x73746570ull;
constexpr uint64_t kTagTrainT = 0x74647261ull;
constexpr uint64_t kTagTrainNoise = 0x6e647261ull;
constexpr uint64_t kTagShuffle = 0x64736866ull;
}  // namespace

Rng sample_init_rng(uint64_t seed) { return Rng(derive_seed(seed, {kTagSampleInit})); }

Rng step_noise_rng(uint64_t seed, int64_t t) {
    return Rng(derive_seed(seed, {kTagStepNoise, static_cast<uint64_t>(t)}));
}

Rng train_timestep_rng(uint64_t seed, int64_t epoch, int64_t step) {
    return Rng(derive_seed(seed, {kTagTrainT, static_cast<uint64_t>(epoch),
                                  static_cast<uint64_t>(step)}));
}

Rng train_noise_rng(uint64_t seed, int64_t epoch, int64_t step) {
    return Rng(derive_seed(seed, {kTagTrainNoise, static_cast<uint64_t>(epoch),
                                  static_cast<uint64_t>(step)}));
}

double step_sigma(const NoiseSchedule& schedule, int64_t t, VarianceKind kind) {
    require(t >= 1 && t <= schedule.T, Error::Kind::validation, "step_sigma: t outside [1,T]");
    if (t == 1) return 0.0;
    if (kind == VarianceKind::beta) return std::sqrt(schedule.beta(t));
    double var = schedule.beta(t) * (1.0 - schedule.alpha_bar(t - 1)) /
                 (1.0 - schedule.alpha_bar(t));
    return std::sqrt(var);
}

Tensor ddpm_mean(const Tensor& z_t, const Tensor& eps, int64_t t,
                 const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.T, Error::Kind::validation, "ddpm_mean: t outside [1,T]");
    require(z_t.same_shape(eps), Error::Kind::shape, "ddpm_mean: shape mismatch");
    double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
    double coeff = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
    Tensor out(z_t.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = inv_sqrt_alpha * (z_t[i] - coeff * eps[i]);
    return out;
}

Tensor ddpm_step(NoisePredictor& model, const Tensor& z_t, int64_t t,
                 const NoiseSchedule& schedule, uint64_t seed, VarianceKind variance) {
    Tensor eps = model.predict(z_t, t);
    Tensor mean = ddpm_mean(z_t, eps, t, schedule);
    if (t == 1) return mean;
    double sigma = step_sigma(schedule, t, variance);
    Rng rng = step_noise_rng(seed, t);
    for (int64_t i = 0; i < mean.size(); ++i) mean[i] += sigma * rng.normal();
    return mean;
}

Tensor sample_latent(NoisePredictor& model, const NoiseSchedule& schedule,
                     const nn::ShapeVec& shape, uint64_t seed, VarianceKind variance) {
    schedule.validate();
    Rng rng = sample_init_rng(seed);
    Tensor z = Tensor::randn(shape, rng);
    for (int64_t t = schedule.T; t >= 1; --t) {
        Tensor eps = model.predict(z, t);
        Tensor mean = ddpm_mean(z, eps, t, schedule);
        if (t > 1) {
            double sigma = step_sigma(schedule, t, variance);
            for (int64_t i = 0; i < mean.size(); ++i) mean[i] += sigma * rng.normal();
        }
        z = std::move(mean);
    }
    return z;
}

double diffusion_loss(NoisePredictor& model, const Tensor& z0, int64_t t,
                      const Tensor& noise, const NoiseSchedule& schedule) {
    Tensor z_t = q_sample(z0, t, noise, schedule);
    Tensor pred = model.predict(z_t, t);
    double loss = nn::tensor_mse(noise, pred);
    require(std::isfinite(loss), Error::Kind::numeric, "diffusion_loss: non-finite loss");
    return loss;
}

Var diffusion_loss_graph(const Denoiser& model, const Tensor& z0, int64_t t,
                         const Tensor& noise, const NoiseSchedule& schedule) {
    Tensor z_t = q_sample(z0, t, noise, schedule);
    Var pred = model.forward_graph(Var::constant(z_t), t);
    return nn::mse(Var::constant(noise), pred);
}

int64_t sample_timestep(Rng& rng, int64_t T) {
    return rng.uniform_int(1, T);
}

DiffusionTrainResult train_diffusion(Denoiser& model, const std::vector<Tensor>& latents,
                                     const NoiseSchedule& schedule,
                                     const DiffusionTrainSettings& settings) {
    require(!latents.empty(), Error::Kind::validation, "train_diffusion: empty latent set");
    schedule.validate();
    auto params = model.named_parameters();
    std::vector<Var> vars;
    for (auto& [name, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {settings.learning_rate, 0.9, 0.999, 1e-8, settings.weight_decay});

    DiffusionTrainResult result;
    for (int64_t epoch = 0; epoch < settings.epochs; ++epoch) {
        std::vector<size_t> order(latents.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(settings.seed, {kTagShuffle, static_cast<uint64_t>(epoch)}));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

        double epoch_loss = 0;
        for (size_t step = 0; step < order.size(); ++step) {
            Rng t_rng = train_timestep_rng(settings.seed, epoch, static_cast<int64_t>(step));
            int64_t t = sample_timestep(t_rng, schedule.T);
            Rng noise_rng = train_noise_rng(settings.seed, epoch, static_cast<int64_t>(step));
            Tensor noise = Tensor::randn(latents[order[step]].shape(), noise_rng);
            Var loss = diffusion_loss_graph(model, latents[order[step]], t, noise, schedule);
            double value = loss.value()[0];
            require(std::isfinite(value), Error::Kind::numeric,
                    "train_diffusion: non-finite loss at epoch " + std::to_string(epoch) +
                        " batch " + std::to_string(step) + " (t=" + std::to_string(t) + ")");
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            epoch_loss += value;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

std::vector<Tensor> encode_latents(const autoencoder::Vae& vae,
                                   const std::vector<Tensor>& inputs, double* scale_out) {
    double scale = autoencoder::compute_latent_scale(vae, inputs);
    std::vector<Tensor> latents;
    latents.reserve(inputs.size());
    for (const auto& input : inputs)
        latents.push_back(nn::tensor_scale(vae.encode(input).mean, scale));
    if (scale_out) *scale_out = scale;
    return latents;
}

orch::Checkpoint make_diffusion_checkpoint(const Denoiser& model,
                                           const NoiseSchedule& schedule,
                                           double latent_scale,
                                           const nn::ShapeVec& latent_shape,
                                           const DiffusionTrainResult& result,
                                           const std::string& vae_hash) {
    orch::Checkpoint ckpt;
    ckpt.kind = "diffusion";
    nlohmann::json cfg = nlohmann::json::parse(model.config().to_json());
    cfg["latent_shape"] = latent_shape;
    ckpt.config_json = cfg.dump();
    nlohmann::json hist;
    hist["loss"] = result.loss_history;
    ckpt.history_json = hist.dump();
    ckpt.constants["latent_scale"] = latent_scale;
    ckpt.refs["vae"] = vae_hash;
    nn::Tensor betas({schedule.T});
    for (int64_t i = 0; i < schedule.T; ++i) betas[i] = schedule.betas[static_cast<size_t>(i)];
    ckpt.blobs.emplace_back("schedule.betas", std::move(betas));
    for (const auto& [name, var] : model.named_parameters())
        ckpt.blobs.emplace_back(name, var.value());
    return ckpt;
}

Denoiser denoiser_from_checkpoint(const orch::Checkpoint& ckpt) {
    require(ckpt.kind == "diffusion", Error::Kind::validation,
            "denoiser_from_checkpoint: checkpoint kind is " + ckpt.kind);
    Denoiser model(DenoiserConfig::from_json(ckpt.config_json), 0);
    model.load_blobs(ckpt);
    return model;
}

NoiseSchedule schedule_from_checkpoint(const orch::Checkpoint& ckpt) {
    const nn::Tensor& betas = ckpt.blob("schedule.betas");
    std::vector<double> b(static_cast<size_t>(betas.size()));
    for (int64_t i = 0; i < betas.size(); ++i) b[static_cast<size_t>(i)] = betas[i];
    return NoiseSchedule::from_betas(std::move(b));
}

nn::ShapeVec latent_shape_from_checkpoint(const orch::Checkpoint& ckpt) {
    auto cfg = nlohmann::json::parse(ckpt.config_json);
    return cfg.at("latent_shape").get<nn::ShapeVec>();
}

}  // namespace voxsyn::diffusion
