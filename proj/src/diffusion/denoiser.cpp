// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/diffusion/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "voxsyn/util/rng.hpp"

namespace voxsyn::diffusion {

using nn::Tensor;
using nn::Var;

namespace {
constexpr uint64_t kTagInit = 0x64656e31ull;
}

void DenoiserConfig::validate() const {
    require(latent_channels >= 1 && base_width >= 1, Error::Kind::config,
            "DenoiserConfig: channel counts must be >= 1");
    require(num_levels >= 1, Error::Kind::config, "DenoiserConfig: num_levels must be >= 1");
    require(time_embedding_dim >= 2 && time_embedding_dim % 2 == 0, Error::Kind::config,
            "DenoiserConfig: time_embedding_dim must be even and >= 2");
    for (int64_t l : attention_levels)
        require(l >= 0 && l < num_levels, Error::Kind::config,
                "DenoiserConfig: attention level out of range");
}

void DenoiserConfig::validate_latent_shape(const nn::ShapeVec& shape) const {
    require(shape.size() == 4, Error::Kind::shape, "latent must be [C,d,h,w]");
    require(shape[0] == latent_channels, Error::Kind::shape,
            "latent channel count does not match config");
    int64_t factor = int64_t{1} << (num_levels - 1);
    const char* names[3] = {"depth", "height", "width"};
    for (int i = 1; i <= 3; ++i)
        require(shape[static_cast<size_t>(i)] % factor == 0, Error::Kind::shape,
                std::string("latent ") + names[i - 1] + " not divisible by " +
                    std::to_string(factor));
}

std::string DenoiserConfig::to_json() const {
    nlohmann::json j;
    j["latent_channels"] = latent_channels;
    j["base_width"] = base_width;
    j["num_levels"] = num_levels;
    j["time_embedding_dim"] = time_embedding_dim;
    j["attention_levels"] = attention_levels;
    return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    DenoiserConfig c;
    c.latent_channels = j.at("latent_channels").get<int64_t>();
    c.base_width = j.at("base_width").get<int64_t>();
    c.num_levels = j.at("num_levels").get<int64_t>();
    c.time_embedding_dim = j.at("time_embedding_dim").get<int64_t>();
    c.attention_levels = j.value("attention_levels", std::vector<int64_t>{});
    return c;
}

Tensor sinusoidal_time_embedding(int64_t t, int64_t dim) {
    Tensor emb({dim});
    int64_t half = dim / 2;
    for (int64_t i = 0; i < half; ++i) {
        double freq = half > 1
                          ? std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half - 1))
                          : 1.0;
        emb[i] = std::sin(static_cast<double>(t) * freq);
        emb[half + i] = std::cos(static_cast<double>(t) * freq);
    }
    return emb;
}

Denoiser::Denoiser(DenoiserConfig config, uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(derive_seed(init_seed, {kTagInit}));
    const int64_t L = config_.num_levels;
    const int64_t te = config_.time_embedding_dim;
    auto width = [&](int64_t l) { return config_.base_width << l; };
    auto wants_attention = [&](int64_t l) {
        return std::find(config_.attention_levels.begin(), config_.attention_levels.end(), l) !=
               config_.attention_levels.end();
    };

    temb_fc1_ = nn::Linear(te, te, rng);
    temb_fc2_ = nn::Linear(te, te, rng);
    stem_ = nn::Conv3d(config_.latent_channels, width(0), 3, 1, rng);
    for (int64_t l = 0; l + 1 < L; ++l) {
        Down d;
        d.block = nn::ResBlock(width(l), width(l), te, rng);
        if (wants_attention(l)) d.attention.emplace(width(l), rng);
        d.down = nn::Conv3d(width(l), width(l + 1), 3, 2, rng);
        downs_.push_back(std::move(d));
    }
    mid1_ = nn::ResBlock(width(L - 1), width(L - 1), te, rng);
    if (wants_attention(L - 1)) mid_attention_.emplace(width(L - 1), rng);
    mid2_ = nn::ResBlock(width(L - 1), width(L - 1), te, rng);
    for (int64_t l = L - 2; l >= 0; --l) {
        Up u;
        u.conv = nn::Conv3d(width(l + 1), width(l), 3, 1, rng);
        u.block = nn::ResBlock(2 * width(l), width(l), te, rng);
        ups_.push_back(std::move(u));
    }
    out_norm_ = nn::GroupNorm(width(0));
    out_conv_ = nn::Conv3d(width(0), config_.latent_channels, 3, 1, rng);
}

Denoiser::EncoderTrace Denoiser::encode_graph(const Var& z, int64_t t) const {
    config_.validate_latent_shape(z.shape());
    EncoderTrace trace;
    Var sincos = Var::constant(sinusoidal_time_embedding(t, config_.time_embedding_dim));
    trace.temb = temb_fc2_(nn::silu(temb_fc1_(sincos)));

    Var h = stem_(z);
    for (const auto& d : downs_) {
        h = d.block(h, &trace.temb);
        if (d.attention) h = (*d.attention)(h);
        trace.skips.push_back(h);
        h = d.down(h);
    }
    h = mid1_(h, &trace.temb);
    if (mid_attention_) h = (*mid_attention_)(h);
    trace.mid = mid2_(h, &trace.temb);
    return trace;
}

Var Denoiser::decode_graph(const EncoderTrace& trace, const ControlInjection* injection) const {
    Var h = trace.mid;
    if (injection && injection->mid_add.defined()) h = nn::add(h, injection->mid_add);
    for (size_t i = 0; i < ups_.size(); ++i) {
        size_t level = ups_.size() - 1 - i;  // skip index for this resolution
        Var skip = trace.skips[level];
        if (injection && injection->skip_add[level].defined())
            skip = nn::add(skip, injection->skip_add[level]);
        h = ups_[i].conv(nn::upsample_nearest2x(h));
        h = ups_[i].block(nn::concat_channels(h, skip), &trace.temb);
    }
    return out_conv_(nn::silu(out_norm_(h)));
}

Var Denoiser::forward_graph(const Var& z, int64_t t, const ControlInjection* injection) const {
    return decode_graph(encode_graph(z, t), injection);
}

Tensor Denoiser::predict(const Tensor& z, int64_t t) {
    return forward_graph(Var::constant(z), t).value();
}

nn::NamedParams Denoiser::named_parameters() const {
    nn::ParamCollector pc;
    auto absorb = [&](const std::string& name, const auto& layer) {
        auto c = pc.scoped(name);
        layer.collect(c);
        pc.absorb(std::move(c));
    };
    absorb("temb.fc1", temb_fc1_);
    absorb("temb.fc2", temb_fc2_);
    absorb("stem", stem_);
    for (size_t i = 0; i < downs_.size(); ++i) {
        absorb("down" + std::to_string(i) + ".block", downs_[i].block);
        if (downs_[i].attention)
            absorb("down" + std::to_string(i) + ".attn", *downs_[i].attention);
        absorb("down" + std::to_string(i) + ".down", downs_[i].down);
    }
    absorb("mid1", mid1_);
    if (mid_attention_) absorb("mid_attn", *mid_attention_);
    absorb("mid2", mid2_);
    for (size_t i = 0; i < ups_.size(); ++i) {
        absorb("up" + std::to_string(i) + ".conv", ups_[i].conv);
        absorb("up" + std::to_string(i) + ".block", ups_[i].block);
    }
    absorb("out_norm", out_norm_);
    absorb("out_conv", out_conv_);
    return pc.items;
}

void Denoiser::set_trainable(bool trainable) {
    auto params = named_parameters();
    for (auto& [name, var] : params) var.set_requires_grad(trainable);
}

void Denoiser::load_blobs(const orch::Checkpoint& ckpt) {
    auto params = named_parameters();
    for (auto& [name, var] : params) {
        const Tensor& blob = ckpt.blob(name);
        require(blob.shape() == var.shape(), Error::Kind::shape,
                "denoiser checkpoint: shape mismatch for " + name);
        var.value_mut() = blob;
    }
}

}  // namespace voxsyn::diffusion
