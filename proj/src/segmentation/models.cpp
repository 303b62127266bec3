// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/segmentation/models.hpp"

#include <json.hpp>

#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/util/rng.hpp"

namespace voxsyn::segmentation {

using nn::Tensor;
using nn::Var;

namespace {
constexpr uint64_t kTagInit = 0x73656731ull;
}

std::string to_string(SegVariant v) {
    switch (v) {
        case SegVariant::unet: return "unet";
        case SegVariant::resunet: return "resunet";
        case SegVariant::wideresunet: return "wideresunet";
        case SegVariant::dynunet: return "dynunet";
        default: return "vnet";
    }
}

SegVariant seg_variant_from_string(const std::string& s) {
    if (s == "unet") return SegVariant::unet;
    if (s == "resunet") return SegVariant::resunet;
    if (s == "wideresunet") return SegVariant::wideresunet;
    if (s == "dynunet") return SegVariant::dynunet;
    if (s == "vnet") return SegVariant::vnet;
    raise(Error::Kind::config, "unknown segmenter variant: " + s);
}

void SegmenterConfig::validate() const {
    require(in_channels == 1, Error::Kind::config, "SegmenterConfig: in_channels must be 1");
    require(num_classes == 2 || num_classes == 5, Error::Kind::config,
            "SegmenterConfig: num_classes must be 2 (liver-only) or 5 (multi-class)");
    require(base_width >= 1 && num_levels >= 1, Error::Kind::config,
            "SegmenterConfig: base_width and num_levels must be >= 1");
}

std::string SegmenterConfig::to_json() const {
    nlohmann::json j;
    j["variant"] = to_string(variant);
    j["in_channels"] = in_channels;
    j["num_classes"] = num_classes;
    j["base_width"] = base_width;
    j["num_levels"] = num_levels;
    j["activation"] = effective_activation() == SegActivation::prelu ? "prelu" : "relu";
    return j.dump();
}

SegmenterConfig SegmenterConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    SegmenterConfig c;
    c.variant = seg_variant_from_string(j.at("variant").get<std::string>());
    c.in_channels = j.at("in_channels").get<int64_t>();
    c.num_classes = j.at("num_classes").get<int>();
    c.base_width = j.at("base_width").get<int64_t>();
    c.num_levels = j.at("num_levels").get<int64_t>();
    c.activation = j.value("activation", std::string("relu")) == "prelu"
                       ? SegActivation::prelu
                       : SegActivation::relu;
    return c;
}

int64_t dynunet_levels(const core::VolumeShape& roi) {
    int64_t levels = 1;
    int64_t h = roi.height, w = roi.width, d = roi.depth;
    while (h >= 8 && w >= 8 && d >= 8) {
        h /= 2;
        w /= 2;
        d /= 2;
        ++levels;
    }
    return levels;
}

Var Segmenter::Block::apply(const Var& x) const {
    auto act = [&](const Var& v, const std::optional<nn::PReLU>& a) {
        return a ? (*a)(v) : nn::relu(v);
    };
    Var h = act(norm1(conv1(x)), act1);
    h = norm2(conv2(h));
    if (residual) h = nn::add(h, shortcut ? (*shortcut)(x) : x);
    return act(h, act2);
}

void Segmenter::Block::collect(nn::ParamCollector& pc) const {
    auto absorb = [&](const char* name, const auto& layer) {
        auto c = pc.scoped(name);
        layer.collect(c);
        pc.absorb(std::move(c));
    };
    absorb("c1", conv1);
    absorb("n1", norm1);
    absorb("c2", conv2);
    absorb("n2", norm2);
    if (shortcut) absorb("sc", *shortcut);
    if (act1) absorb("a1", *act1);
    if (act2) absorb("a2", *act2);
}

Segmenter::Segmenter(SegmenterConfig config, const core::VolumeShape& roi, uint64_t init_seed)
    : config_(std::move(config)) {
    config_.validate();
    num_levels_ = config_.variant == SegVariant::dynunet ? dynunet_levels(roi)
                                                         : config_.num_levels;
    roi.require_divisible(int64_t{1} << (num_levels_ - 1));

    // wideresunet widens every level relative to the configured base.
    int64_t base = config_.base_width * (config_.variant == SegVariant::wideresunet ? 2 : 1);
    bool residual = config_.variant == SegVariant::resunet ||
                    config_.variant == SegVariant::wideresunet ||
                    config_.variant == SegVariant::vnet;
    bool use_prelu = config_.effective_activation() == SegActivation::prelu;
    auto width = [&](int64_t l) { return base << l; };

    Rng rng(derive_seed(init_seed, {kTagInit}));
    auto make_block = [&](int64_t cin, int64_t cout) {
        Block b;
        b.conv1 = nn::Conv3d(cin, cout, 3, 1, rng);
        b.norm1 = nn::GroupNorm(cout);
        b.conv2 = nn::Conv3d(cout, cout, 3, 1, rng);
        b.norm2 = nn::GroupNorm(cout);
        b.residual = residual;
        if (residual && cin != cout) b.shortcut = nn::Conv3d(cin, cout, 1, 1, rng);
        if (use_prelu) {
            b.act1.emplace(cout);
            b.act2.emplace(cout);
        }
        return b;
    };

    int64_t prev = config_.in_channels;
    for (int64_t l = 0; l < num_levels_; ++l) {
        enc_.push_back(make_block(prev, width(l)));
        prev = width(l);
        if (l + 1 < num_levels_) downs_.push_back(nn::Conv3d(width(l), width(l), 3, 2, rng));
    }
    for (int64_t l = num_levels_ - 2; l >= 0; --l) {
        up_convs_.push_back(nn::Conv3d(width(l + 1), width(l), 3, 1, rng));
        dec_.push_back(make_block(2 * width(l), width(l)));
    }
    head_ = nn::Conv3d(width(0), config_.num_classes, 1, 1, rng);
}

Var Segmenter::logits_graph(const Var& x) const {
    require(x.shape().size() == 4 && x.shape()[0] == config_.in_channels,
            Error::Kind::shape, "segmenter: input must be [1,D,H,W]");
    core::VolumeShape in_shape{x.shape()[2], x.shape()[3], x.shape()[1], 1};
    in_shape.require_divisible(int64_t{1} << (num_levels_ - 1));

    std::vector<Var> skips;
    Var h = x;
    for (size_t l = 0; l < enc_.size(); ++l) {
        h = enc_[l].apply(h);
        if (l + 1 < enc_.size()) {
            skips.push_back(h);
            h = downs_[l](h);
        }
    }
    for (size_t i = 0; i < up_convs_.size(); ++i) {
        Var up = up_convs_[i](nn::upsample_nearest2x(h));
        h = dec_[i].apply(nn::concat_channels(up, skips[skips.size() - 1 - i]));
    }
    return head_(h);
}

Tensor Segmenter::logits(const Tensor& x) const {
    return logits_graph(Var::constant(x)).value();
}

int64_t Segmenter::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, var] : named_parameters()) n += var.value().size();
    return n;
}

nn::NamedParams Segmenter::named_parameters() const {
    nn::ParamCollector pc;
    for (size_t i = 0; i < enc_.size(); ++i) {
        auto c = pc.scoped("enc" + std::to_string(i));
        enc_[i].collect(c);
        pc.absorb(std::move(c));
    }
    for (size_t i = 0; i < downs_.size(); ++i) {
        auto c = pc.scoped("down" + std::to_string(i));
        downs_[i].collect(c);
        pc.absorb(std::move(c));
    }
    for (size_t i = 0; i < up_convs_.size(); ++i) {
        auto c = pc.scoped("up" + std::to_string(i));
        up_convs_[i].collect(c);
        pc.absorb(std::move(c));
    }
    for (size_t i = 0; i < dec_.size(); ++i) {
        auto c = pc.scoped("dec" + std::to_string(i));
        dec_[i].collect(c);
        pc.absorb(std::move(c));
    }
    auto h = pc.scoped("head");
    head_.collect(h);
    pc.absorb(std::move(h));
    return pc.items;
}

void Segmenter::load_blobs(const orch::Checkpoint& ckpt) {
    auto params = named_parameters();
    for (auto& [name, var] : params) {
        const Tensor& blob = ckpt.blob(name);
        require(blob.shape() == var.shape(), Error::Kind::shape,
                "segmenter checkpoint: shape mismatch for " + name);
        var.value_mut() = blob;
    }
}

Segmenter build_segmenter(const SegmenterConfig& config, const core::VolumeShape& roi,
                          uint64_t init_seed) {
    return Segmenter(config, roi, init_seed);
}

core::LabelMap predict_mask(const Segmenter& model, const core::Volume& v) {
    require(v.normalized, Error::Kind::validation, "predict_mask: volume must be normalized");
    Tensor lg = model.logits(v.to_tensor());
    Var probs = nn::softmax_channels(Var::constant(lg));
    return core::argmax_decode(probs.value(), model.config().num_classes);
}

}  // namespace voxsyn::segmentation
