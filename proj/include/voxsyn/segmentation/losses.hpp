// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxsyn/core/types.hpp"
#include "voxsyn/nn/ops.hpp"

namespace voxsyn::segmentation {

enum class DiceReduction { mean_over_classes, foreground_only };

struct DiceLossConfig {
    double smoothing_epsilon = 1e-6;
    DiceReduction reduction = DiceReduction::foreground_only;

    void validate() const {
        require(smoothing_epsilon > 0, Error::Kind::config,
                "DiceLossConfig: smoothing_epsilon must be > 0");
    }
};

/// Per-voxel class probabilities [C,D,H,W]; multi-class rows sum to 1.
struct PredictionVolume {
    nn::Tensor probabilities;
    int num_classes = 0;

    void validate() const;
};

/// Soft Dice loss 1 - (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps) per class, reduced
/// per config. Value lies in [0,1).
double dice_loss(const PredictionVolume& p, const core::LabelMap& g,
                 const DiceLossConfig& cfg);

enum class CrossEntropyMode { binary, categorical };

/// Mean NLL with probabilities clamped to [1e-7, 1-1e-7].
double cross_entropy_loss(const PredictionVolume& p, const core::LabelMap& g,
                          CrossEntropyMode mode);

/// Maps every non-background class to the single liver class.
core::LabelMap relabel_liver_only(const core::LabelMap& g);

constexpr double kProbabilityClamp = 1e-7;

}  // namespace voxsyn::segmentation
