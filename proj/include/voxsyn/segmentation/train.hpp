// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxsyn/segmentation/losses.hpp"
#include "voxsyn/segmentation/models.hpp"

namespace voxsyn::segmentation {

enum class SegTask { liver_only, multi_class };
enum class LossMix { dice_ce, dice_only, ce_only };

std::string to_string(SegTask t);
std::string to_string(LossMix m);

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Feed one validation metric; returns true when training should stop
    /// after this epoch.
    bool update(double metric) {
        if (metric > best_) {
            best_ = metric;
            stale_ = 0;
        } else {
            ++stale_;
        }
        return stale_ >= patience_;
    }

    double best() const { return best_; }

private:
    int patience_;
    int stale_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
};

struct SegTrainSettings {
    int64_t max_epochs = 300;
    int patience = 10;
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    LossMix loss_mix = LossMix::dice_ce;
    DiceLossConfig dice;
    /// Optional fast exit once validation Dice crosses this value (still
    /// recorded as a normal epoch); <= 0 disables.
    double stop_at_val_dice = 0.0;
};

struct SegSample {
    core::Volume volume;
    core::LabelMap label;  // already task-relabeled
};

struct SegTrainHistory {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_dice;    // per epoch (foreground-mean, hard)
    int64_t best_epoch = -1;
    double best_val_dice = 0;
};

struct SegTrainResult {
    SegTrainHistory history;
    std::vector<nn::Tensor> best_weights;  // parallel to named_parameters order
};

/// Dice(+CE) training with early stopping on validation Dice; returns the
/// best-validation weights. Deterministic per seed.
SegTrainResult train_segmenter(Segmenter& model, const std::vector<SegSample>& train,
                               const std::vector<SegSample>& val,
                               const SegTrainSettings& settings);

/// Relabels a sample set for the liver-only task; multi_class passes through.
std::vector<SegSample> prepare_task_samples(const std::vector<SegSample>& samples,
                                            SegTask task);

orch::Checkpoint make_segmenter_checkpoint(const Segmenter& model,
                                           const SegTrainResult& result,
                                           const std::string& task,
                                           const std::string& data_condition);

/// Foreground-mean hard Dice of predictions against labels over a sample set.
double evaluate_mean_dice(const Segmenter& model, const std::vector<SegSample>& samples);

}  // namespace voxsyn::segmentation
