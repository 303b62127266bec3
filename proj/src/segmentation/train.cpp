// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/segmentation/train.hpp"

#include <json.hpp>

#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/metrics/metrics.hpp"
#include "voxsyn/nn/optim.hpp"
#include "voxsyn/util/rng.hpp"

namespace voxsyn::segmentation {

using nn::Tensor;
using nn::Var;

namespace {
constexpr uint64_t kTagShuffle = 0x67736866ull;
}

std::string to_string(SegTask t) {
    return t == SegTask::liver_only ? "liver_only" : "multi_class";
}

std::string to_string(LossMix m) {
    switch (m) {
        case LossMix::dice_ce: return "dice_ce";
        case LossMix::dice_only: return "dice_only";
        default: return "ce_only";
    }
}

std::vector<SegSample> prepare_task_samples(const std::vector<SegSample>& samples,
                                            SegTask task) {
    if (task == SegTask::multi_class) return samples;
    std::vector<SegSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.volume, relabel_liver_only(s.label)});
    return out;
}

double evaluate_mean_dice(const Segmenter& model, const std::vector<SegSample>& samples) {
    require(!samples.empty(), Error::Kind::validation, "evaluate_mean_dice: empty sample set");
    double acc = 0;
    for (const auto& s : samples) {
        core::LabelMap pred = predict_mask(model, s.volume);
        acc += metrics::foreground_mean_dice(pred, s.label);
    }
    return acc / static_cast<double>(samples.size());
}

SegTrainResult train_segmenter(Segmenter& model, const std::vector<SegSample>& train,
                               const std::vector<SegSample>& val,
                               const SegTrainSettings& settings) {
    require(!train.empty(), Error::Kind::validation, "train_segmenter: empty train split");
    require(!val.empty(), Error::Kind::validation, "train_segmenter: empty validation split");
    settings.dice.validate();

    auto params = model.named_parameters();
    std::vector<Var> vars;
    for (auto& [name, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {settings.learning_rate, 0.9, 0.999, 1e-8, settings.weight_decay});

    const bool binary = model.config().num_classes == 2;
    SegTrainResult result;
    EarlyStopper stopper(settings.patience);

    auto snapshot = [&]() {
        std::vector<Tensor> weights;
        weights.reserve(params.size());
        for (auto& [name, v] : params) weights.push_back(v.value());
        return weights;
    };

    for (int64_t epoch = 0; epoch < settings.max_epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(settings.seed, {kTagShuffle, static_cast<uint64_t>(epoch)}));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

        double epoch_loss = 0;
        for (size_t step = 0; step < order.size(); ++step) {
            const SegSample& sample = train[order[step]];
            Var logits = model.logits_graph(Var::constant(sample.volume.to_tensor()));
            Var probs = nn::softmax_channels(logits);
            core::OneHotLabel oh = core::one_hot_encode(sample.label);

            Var loss;
            if (settings.loss_mix != LossMix::ce_only)
                loss = nn::soft_dice_loss(probs, oh.data, settings.dice.smoothing_epsilon,
                                          settings.dice.reduction == DiceReduction::foreground_only);
            if (settings.loss_mix != LossMix::dice_only) {
                Var ce = nn::cross_entropy_nll(probs, sample.label.data, binary,
                                               kProbabilityClamp);
                loss = loss.defined() ? nn::add(loss, ce) : ce;
            }

            double value = loss.value()[0];
            require(std::isfinite(value), Error::Kind::numeric,
                    "train_segmenter: non-finite loss at epoch " + std::to_string(epoch) +
                        " batch " + std::to_string(step));
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            epoch_loss += value;
        }
        result.history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

        double val_dice = evaluate_mean_dice(model, val);
        result.history.val_dice.push_back(val_dice);
        if (val_dice > result.history.best_val_dice || result.history.best_epoch < 0) {
            result.history.best_val_dice = val_dice;
            result.history.best_epoch = epoch;
            result.best_weights = snapshot();
        }
        if (stopper.update(val_dice)) break;
        if (settings.stop_at_val_dice > 0 && val_dice >= settings.stop_at_val_dice) break;
    }
    return result;
}

orch::Checkpoint make_segmenter_checkpoint(const Segmenter& model,
                                           const SegTrainResult& result,
                                           const std::string& task,
                                           const std::string& data_condition) {
    orch::Checkpoint ckpt;
    ckpt.kind = "segmenter";
    nlohmann::json cfg = nlohmann::json::parse(model.config().to_json());
    cfg["task"] = task;
    cfg["data_condition"] = data_condition;
    ckpt.config_json = cfg.dump();
    nlohmann::json hist;
    hist["train_loss"] = result.history.train_loss;
    hist["val_dice"] = result.history.val_dice;
    hist["best_epoch"] = result.history.best_epoch;
    hist["best_val_dice"] = result.history.best_val_dice;
    ckpt.history_json = hist.dump();

    auto params = model.named_parameters();
    require(result.best_weights.size() == params.size(), Error::Kind::validation,
            "make_segmenter_checkpoint: weight snapshot size mismatch");
    for (size_t i = 0; i < params.size(); ++i)
        ckpt.blobs.emplace_back(params[i].first, result.best_weights[i]);
    return ckpt;
}

}  // namespace voxsyn::segmentation
