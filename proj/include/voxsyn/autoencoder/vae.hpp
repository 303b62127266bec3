// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxsyn/nn/layers.hpp"
#include "voxsyn/nn/optim.hpp"
#include "voxsyn/orch/checkpoint.hpp"

namespace voxsyn::autoencoder {

enum class VaeStage { label, image };

struct AutoencoderConfig {
    int64_t in_channels = 1;       // 1 for volumes, num_classes for labels
    int64_t latent_channels = 4;
    int64_t downsample_factor = 4;  // power of two
    int64_t base_width = 16;
    double kl_weight = 1e-7;
    VaeStage stage = VaeStage::image;
    bool l1_reconstruction = false;  // MSE by default

    int64_t levels() const;  // log2(downsample_factor)
    void validate() const;

    std::string to_json() const;
    static AutoencoderConfig from_json(const std::string& text);
};

/// Posterior parameters produced by the encoder. log_variance is clamped to
/// [-30, 20] at encode time.
struct GaussianLatent {
    nn::Tensor mean;
    nn::Tensor log_variance;

    void validate() const;
};

/// z = mean + exp(0.5 * log_variance) * eta with eta ~ N(0,1) drawn from seed.
nn::Tensor reparameterize(const GaussianLatent& g, uint64_t seed);

/// Mean over elements of 0.5 * (mean^2 + exp(log_variance) - 1 - log_variance).
double kl_divergence(const GaussianLatent& g);

struct VaeLossValue {
    double total = 0;
    double reconstruction = 0;
    double kl = 0;
};

/// Reconstruction error plus kl_weight * KL; returns all three components.
VaeLossValue vae_loss(const nn::Tensor& input, const nn::Tensor& reconstruction,
                      const GaussianLatent& g, double kl_weight,
                      bool l1_reconstruction = false);

/// 3D convolutional VAE: per resolution level one residual block and a
/// stride-2 downsampling conv, mirrored by nearest-upsample + conv on the
/// decoder side. Image-stage decoders squash outputs into [0,1].
class Vae {
public:
    Vae(AutoencoderConfig config, uint64_t init_seed);

    const AutoencoderConfig& config() const { return config_; }

    GaussianLatent encode(const nn::Tensor& x) const;
    nn::Tensor decode(const nn::Tensor& z) const;

    /// Training graph: returns total loss plus component values for history.
    struct LossGraph {
        nn::Var total;
        double reconstruction = 0;
        double kl = 0;
    };
    LossGraph loss_graph(const nn::Tensor& input, const nn::Tensor& noise) const;

    nn::NamedParams named_parameters() const;
    void set_trainable(bool trainable);

    void load_blobs(const orch::Checkpoint& ckpt);

private:
    struct Level {
        nn::ResBlock block;
        nn::Conv3d down;
    };
    struct UpLevel {
        nn::Conv3d conv;
        nn::ResBlock block;
    };

    nn::Var encode_graph(const nn::Var& x, nn::Var& mean, nn::Var& logvar) const;
    nn::Var decode_graph(const nn::Var& z) const;

    AutoencoderConfig config_;
    // encoder
    nn::Conv3d stem_;
    std::vector<Level> enc_levels_;
    nn::ResBlock enc_bottom_;
    nn::GroupNorm enc_out_norm_;
    nn::Conv3d enc_out_conv_;
    // decoder
    nn::Conv3d dec_in_conv_;
    nn::ResBlock dec_bottom_;
    std::vector<UpLevel> dec_levels_;
    nn::GroupNorm dec_out_norm_;
    nn::Conv3d dec_out_conv_;
};

struct VaeTrainSettings {
    int64_t epochs = 50;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
};

struct VaeEpochStats {
    double total = 0;
    double reconstruction = 0;
    double kl = 0;
};

struct VaeTrainResult {
    std::vector<VaeEpochStats> history;
    double latent_scale = 1.0;  // 1 / std of posterior means over the inputs
};

/// AdamW training over in-memory input tensors (volumes or one-hot labels).
/// Deterministic per (config, inputs, settings.seed); aborts with epoch/batch
/// diagnostics on a non-finite loss.
VaeTrainResult train_vae(Vae& model, const std::vector<nn::Tensor>& inputs,
                         const VaeTrainSettings& settings);

/// 1 / std over all posterior-mean elements of `inputs` (1 if degenerate).
double compute_latent_scale(const Vae& model, const std::vector<nn::Tensor>& inputs);

orch::Checkpoint make_vae_checkpoint(const Vae& model, const VaeTrainResult& result);
Vae vae_from_checkpoint(const orch::Checkpoint& ckpt);

}  // namespace voxsyn::autoencoder
