// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxsyn/core/types.hpp"
#include "voxsyn/diffusion/ddpm.hpp"

namespace voxsyn::controlnet {

struct ControlNetConfig {
    diffusion::DenoiserConfig base;      // architecture the branch copies
    int64_t condition_channels = 4;      // label latent channels
    bool zero_init = true;

    void validate() const;
    std::string to_json() const;
    static ControlNetConfig from_json(const std::string& text);
};

/// Label latent consumed as the spatial condition; produced by
/// encode_condition and required to match the image latent's spatial dims.
struct ConditionTensor {
    nn::Tensor data;
};

/// one_hot -> label-VAE posterior mean -> latent scaling. Deterministic (mean,
/// not a sample).
ConditionTensor encode_condition(const core::LabelMap& label,
                                 const autoencoder::Vae& label_vae,
                                 double latent_scale);

/// Trainable copy of the base denoiser's encoder half plus zero-initialized
/// 1x1x1 projections into the base's skips and bottleneck. At zero init the
/// conditioned prediction is bit-equal to the unconditioned one.
class ControlNet {
public:
    /// Copies encoder weights from `base` when zero_init (the canonical
    /// construction); a non-zero-init branch draws fresh projection weights.
    ControlNet(const ControlNetConfig& config, const diffusion::Denoiser& base,
               uint64_t init_seed);

    const ControlNetConfig& config() const { return config_; }

    /// Runs the control branch and returns the per-level residual additions.
    diffusion::ControlInjection injection_graph(const nn::Var& z_t, int64_t t,
                                                const nn::Var& cond) const;

    nn::NamedParams named_parameters() const;
    void set_trainable(bool trainable);
    void load_blobs(const orch::Checkpoint& ckpt);

private:
    ControlNetConfig config_;
    nn::Linear temb_fc1_, temb_fc2_;
    nn::Conv3d cond_in_;   // zero-init 1x1x1: condition -> latent channels
    nn::Conv3d stem_;
    std::vector<diffusion::Denoiser::Down> downs_;
    nn::ResBlock mid1_;
    std::optional<nn::SelfAttention> mid_attention_;
    nn::ResBlock mid2_;
    std::vector<nn::Conv3d> skip_proj_;  // zero-init 1x1x1 per level
    nn::Conv3d mid_proj_;                // zero-init 1x1x1
};

/// eps_theta(z_t, t, c): base prediction with the control branch's residuals
/// injected at each resolution.
nn::Tensor conditioned_predict_noise(const diffusion::Denoiser& base,
                                     const ControlNet& control, const nn::Tensor& z_t,
                                     int64_t t, const ConditionTensor& cond);

nn::Var conditioned_predict_graph(const diffusion::Denoiser& base,
                                  const ControlNet& control, const nn::Var& z_t,
                                  int64_t t, const nn::Var& cond);

/// NoisePredictor adapter so ancestral sampling code is shared with the
/// unconditional path (identical RNG consumption).
struct ConditionedSampler : diffusion::NoisePredictor {
    const diffusion::Denoiser& base;
    const ControlNet& control;
    ConditionTensor cond;

    ConditionedSampler(const diffusion::Denoiser& b, const ControlNet& c, ConditionTensor t)
        : base(b), control(c), cond(std::move(t)) {}

    nn::Tensor predict(const nn::Tensor& z, int64_t t) override {
        return conditioned_predict_noise(base, control, z, t, cond);
    }
};

/// Interface mirror of NoisePredictor for conditioned stubs in tests.
struct ConditionedPredictor {
    virtual ~ConditionedPredictor() = default;
    virtual nn::Tensor predict(const nn::Tensor& z_t, int64_t t,
                               const ConditionTensor& cond) = 0;
};

/// Ancestral sampling with conditioned_predict_noise at every step; shares
/// the RNG streams with the unconditional sampler, so a zero-init branch
/// reproduces sample_latent bit for bit.
nn::Tensor conditional_sample(const diffusion::Denoiser& base, const ControlNet& control,
                              const ConditionTensor& cond,
                              const diffusion::NoiseSchedule& schedule,
                              const nn::ShapeVec& shape, uint64_t seed,
                              diffusion::VarianceKind variance =
                                  diffusion::VarianceKind::posterior);

/// Latent-level loss core: MSE between noise and the conditioned prediction
/// on q_sample(z0, t, noise).
double controlnet_loss_on_latents(ConditionedPredictor& predictor, const nn::Tensor& z0,
                                  int64_t t, const nn::Tensor& noise,
                                  const ConditionTensor& cond,
                                  const diffusion::NoiseSchedule& schedule);

/// Full Eq-style loss on a paired (volume, label): encode the volume through
/// the frozen image VAE, corrupt, and compare against the conditioned
/// prediction. Gradients flow only into the control branch.
double controlnet_loss(const diffusion::Denoiser& base, const ControlNet& control,
                       const core::Volume& x, const core::LabelMap& label,
                       int64_t t, const nn::Tensor& noise,
                       const autoencoder::Vae& image_vae, double image_scale,
                       const autoencoder::Vae& label_vae, double label_scale,
                       const diffusion::NoiseSchedule& schedule);

nn::Var controlnet_loss_graph(const diffusion::Denoiser& base, const ControlNet& control,
                              const nn::Tensor& z0, int64_t t, const nn::Tensor& noise,
                              const ConditionTensor& cond,
                              const diffusion::NoiseSchedule& schedule);

struct ControlNetTrainSettings {
    int64_t epochs = 50;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
};

struct ControlNetTrainResult {
    std::vector<double> loss_history;
};

/// Optimizes the control branch on pre-encoded (z0, condition) pairs; the
/// base stays frozen (bit-unchanged, asserted by hash in the checkpointing
/// layer and tests).
ControlNetTrainResult train_controlnet(ControlNet& control, const diffusion::Denoiser& base,
                                       const std::vector<nn::Tensor>& image_latents,
                                       const std::vector<ConditionTensor>& conditions,
                                       const diffusion::NoiseSchedule& schedule,
                                       const ControlNetTrainSettings& settings);

orch::Checkpoint make_controlnet_checkpoint(const ControlNet& control,
                                            const ControlNetTrainResult& result,
                                            const std::string& base_hash,
                                            const std::string& image_vae_hash,
                                            const std::string& label_vae_hash);
ControlNet controlnet_from_checkpoint(const orch::Checkpoint& ckpt,
                                      const diffusion::Denoiser& base);

}  // namespace voxsyn::controlnet
