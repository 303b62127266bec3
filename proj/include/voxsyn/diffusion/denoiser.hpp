// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxsyn/nn/layers.hpp"
#include "voxsyn/orch/checkpoint.hpp"

namespace voxsyn::diffusion {

struct DenoiserConfig {
    int64_t latent_channels = 4;
    int64_t base_width = 16;
    int64_t num_levels = 2;
    int64_t time_embedding_dim = 32;
    std::vector<int64_t> attention_levels;  // level indices; usually empty

    void validate() const;
    void validate_latent_shape(const nn::ShapeVec& shape) const;

    std::string to_json() const;
    static DenoiserConfig from_json(const std::string& text);
};

/// Interface for anything that predicts the corruption noise; sampling and
/// loss helpers are written against it so tests can inject stubs.
struct NoisePredictor {
    virtual ~NoisePredictor() = default;
    virtual nn::Tensor predict(const nn::Tensor& z, int64_t t) = 0;
};

nn::Tensor sinusoidal_time_embedding(int64_t t, int64_t dim);

/// Residual additions a control branch contributes to the base denoiser: one
/// per encoder level plus one at the bottleneck.
struct ControlInjection {
    std::vector<nn::Var> skip_add;
    nn::Var mid_add;
};

/// Time-conditioned 3D U-Net over latents. Levels share the structure
/// ResBlock (+optional attention) -> strided conv down; the decoder mirrors
/// with nearest-upsample + conv and skip concatenation.
class Denoiser : public NoisePredictor {
public:
    Denoiser(DenoiserConfig config, uint64_t init_seed);

    const DenoiserConfig& config() const { return config_; }

    struct EncoderTrace {
        std::vector<nn::Var> skips;  // one per level 0..L-2
        nn::Var mid;
        nn::Var temb;
    };

    EncoderTrace encode_graph(const nn::Var& z, int64_t t) const;
    nn::Var decode_graph(const EncoderTrace& trace,
                         const ControlInjection* injection = nullptr) const;
    nn::Var forward_graph(const nn::Var& z, int64_t t,
                          const ControlInjection* injection = nullptr) const;

    nn::Tensor predict(const nn::Tensor& z, int64_t t) override;

    nn::NamedParams named_parameters() const;
    void set_trainable(bool trainable);
    void load_blobs(const orch::Checkpoint& ckpt);

    // Layer access for the ControlNet trainable copy.
    struct Down {
        nn::ResBlock block;
        std::optional<nn::SelfAttention> attention;
        nn::Conv3d down;
    };
    const nn::Linear& temb_fc1() const { return temb_fc1_; }
    const nn::Linear& temb_fc2() const { return temb_fc2_; }
    const nn::Conv3d& stem() const { return stem_; }
    const std::vector<Down>& downs() const { return downs_; }
    const nn::ResBlock& mid1() const { return mid1_; }
    const std::optional<nn::SelfAttention>& mid_attention() const { return mid_attention_; }
    const nn::ResBlock& mid2() const { return mid2_; }

private:
    struct Up {
        nn::Conv3d conv;
        nn::ResBlock block;
    };

    DenoiserConfig config_;
    nn::Linear temb_fc1_;
    nn::Linear temb_fc2_;
    nn::Conv3d stem_;
    std::vector<Down> downs_;
    nn::ResBlock mid1_;
    std::optional<nn::SelfAttention> mid_attention_;
    nn::ResBlock mid2_;
    std::vector<Up> ups_;
    nn::GroupNorm out_norm_;
    nn::Conv3d out_conv_;
};

}  // namespace voxsyn::diffusion
