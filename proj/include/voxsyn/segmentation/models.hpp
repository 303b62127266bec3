// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxsyn/core/types.hpp"
#include "voxsyn/nn/layers.hpp"
#include "voxsyn/orch/checkpoint.hpp"

namespace voxsyn::segmentation {

enum class SegVariant { unet, resunet, wideresunet, dynunet, vnet };

std::string to_string(SegVariant v);
SegVariant seg_variant_from_string(const std::string& s);

enum class SegActivation { relu, prelu };

struct SegmenterConfig {
    SegVariant variant = SegVariant::unet;
    int64_t in_channels = 1;
    int num_classes = 5;  // 2 for liver-only
    int64_t base_width = 16;
    int64_t num_levels = 4;
    SegActivation activation = SegActivation::relu;  // vnet always uses prelu

    /// vnet resolves to prelu regardless of the configured default.
    SegActivation effective_activation() const {
        return variant == SegVariant::vnet ? SegActivation::prelu : activation;
    }

    void validate() const;
    std::string to_json() const;
    static SegmenterConfig from_json(const std::string& text);
};

/// Level count for the shape-adaptive variant: halve while every spatial dim
/// stays >= 8.
int64_t dynunet_levels(const core::VolumeShape& roi);

/// 3D encoder-decoder with skip connections. resunet/wideresunet/vnet blocks
/// carry identity shortcuts; wideresunet doubles the channel widths; vnet
/// activates with per-channel PReLU.
class Segmenter {
public:
    Segmenter(SegmenterConfig config, const core::VolumeShape& roi, uint64_t init_seed);

    const SegmenterConfig& config() const { return config_; }
    int64_t num_levels() const { return num_levels_; }
    int64_t parameter_count() const;

    nn::Var logits_graph(const nn::Var& x) const;
    nn::Tensor logits(const nn::Tensor& x) const;

    nn::NamedParams named_parameters() const;
    void load_blobs(const orch::Checkpoint& ckpt);

private:
    struct Block {
        nn::Conv3d conv1;
        nn::GroupNorm norm1;
        nn::Conv3d conv2;
        nn::GroupNorm norm2;
        std::optional<nn::Conv3d> shortcut;  // residual variants
        std::optional<nn::PReLU> act1, act2;  // vnet
        bool residual = false;

        nn::Var apply(const nn::Var& x) const;
        void collect(nn::ParamCollector& pc) const;
    };

    SegmenterConfig config_;
    int64_t num_levels_ = 0;
    std::vector<Block> enc_;
    std::vector<nn::Conv3d> downs_;
    std::vector<nn::Conv3d> up_convs_;
    std::vector<Block> dec_;
    nn::Conv3d head_;
};

Segmenter build_segmenter(const SegmenterConfig& config, const core::VolumeShape& roi,
                          uint64_t init_seed = 0);

/// Forward pass, softmax, per-voxel argmax with the shared tie-break rule.
core::LabelMap predict_mask(const Segmenter& model, const core::Volume& v);

}  // namespace voxsyn::segmentation
