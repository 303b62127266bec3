// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/segmentation/losses.hpp"

#include "voxsyn/core/preprocess.hpp"

namespace voxsyn::segmentation {

void PredictionVolume::validate() const {
    require(probabilities.rank() == 4, Error::Kind::shape,
            "PredictionVolume: expected [C,D,H,W]");
    require(probabilities.dim(0) == num_classes, Error::Kind::shape,
            "PredictionVolume: channel count does not match num_classes");
    int64_t n = probabilities.size() / num_classes;
    for (int64_t i = 0; i < n; ++i) {
        double sum = 0;
        for (int64_t c = 0; c < num_classes; ++c) {
            double v = probabilities[c * n + i];
            require(v >= 0.0 && v <= 1.0, Error::Kind::validation,
                    "PredictionVolume: probability outside [0,1]");
            sum += v;
        }
        require(std::abs(sum - 1.0) <= 1e-5, Error::Kind::validation,
                "PredictionVolume: per-voxel probabilities do not sum to 1");
    }
}

namespace {

void check_pair(const PredictionVolume& p, const core::LabelMap& g) {
    require(p.probabilities.dim(1) == g.shape.depth &&
                p.probabilities.dim(2) == g.shape.height &&
                p.probabilities.dim(3) == g.shape.width,
            Error::Kind::shape, "loss: prediction/label spatial shape mismatch");
    require(p.num_classes == g.num_classes, Error::Kind::shape,
            "loss: prediction/label class count mismatch");
}

}  // namespace

double dice_loss(const PredictionVolume& p, const core::LabelMap& g,
                 const DiceLossConfig& cfg) {
    cfg.validate();
    check_pair(p, g);
    core::OneHotLabel oh = core::one_hot_encode(g);
    nn::Var loss = nn::soft_dice_loss(nn::Var::constant(p.probabilities), oh.data,
                                      cfg.smoothing_epsilon,
                                      cfg.reduction == DiceReduction::foreground_only);
    return loss.value()[0];
}

double cross_entropy_loss(const PredictionVolume& p, const core::LabelMap& g,
                          CrossEntropyMode mode) {
    check_pair(p, g);
    if (mode == CrossEntropyMode::binary)
        require(p.num_classes == 2, Error::Kind::validation,
                "cross_entropy_loss: binary mode requires 2 classes");
    else
        require(p.num_classes >= 2, Error::Kind::validation,
                "cross_entropy_loss: categorical mode requires >= 2 classes");
    nn::Var loss = nn::cross_entropy_nll(nn::Var::constant(p.probabilities), g.data,
                                         mode == CrossEntropyMode::binary,
                                         kProbabilityClamp);
    return loss.value()[0];
}

core::LabelMap relabel_liver_only(const core::LabelMap& g) {
    g.validate();
    core::LabelMap out = g;
    out.num_classes = 2;
    for (auto& v : out.data) v = v == 0 ? 0 : 1;
    return out;
}

}  // namespace voxsyn::segmentation
