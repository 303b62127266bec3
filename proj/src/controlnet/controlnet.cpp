// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/controlnet/controlnet.hpp"

#include <cmath>

#include <json.hpp>

#include "voxsyn/core/preprocess.hpp"

namespace voxsyn::controlnet {

using nn::Tensor;
using nn::Var;

namespace {
constexpr uint64_t kTagInit = 0x636e6574ull;
constexpr uint64_t kTagTrainT = 0x63747261ull;
constexpr uint64_t kTagTrainNoise = 0x636e6f69ull;
constexpr uint64_t kTagShuffle = 0x63736866ull;

Var copy_var(const Var& src) {
    return Var::leaf(src.value(), true);
}

nn::Conv3d copy_conv(const nn::Conv3d& src) {
    nn::Conv3d out;
    out.weight = copy_var(src.weight);
    out.bias = copy_var(src.bias);
    out.stride = src.stride;
    out.pad = src.pad;
    return out;
}

nn::GroupNorm copy_norm(const nn::GroupNorm& src) {
    nn::GroupNorm out;
    out.gamma = copy_var(src.gamma);
    out.beta = copy_var(src.beta);
    out.groups = src.groups;
    return out;
}

nn::Linear copy_linear(const nn::Linear& src) {
    nn::Linear out;
    out.weight = copy_var(src.weight);
    out.bias = copy_var(src.bias);
    return out;
}

nn::ResBlock copy_block(const nn::ResBlock& src) {
    nn::ResBlock out;
    out.norm1 = copy_norm(src.norm1);
    out.conv1 = copy_conv(src.conv1);
    out.norm2 = copy_norm(src.norm2);
    out.conv2 = copy_conv(src.conv2);
    if (src.skip_proj) out.skip_proj = copy_conv(*src.skip_proj);
    if (src.temb_proj) out.temb_proj = copy_linear(*src.temb_proj);
    return out;
}

nn::SelfAttention copy_attention(const nn::SelfAttention& src) {
    nn::SelfAttention out;
    out.norm = copy_norm(src.norm);
    out.wq = copy_var(src.wq);
    out.wk = copy_var(src.wk);
    out.wv = copy_var(src.wv);
    out.wo = copy_var(src.wo);
    out.channels = src.channels;
    return out;
}

}  // namespace

void ControlNetConfig::validate() const {
    base.validate();
    require(condition_channels >= 1, Error::Kind::config,
            "ControlNetConfig: condition_channels must be >= 1");
}

std::string ControlNetConfig::to_json() const {
    nlohmann::json j;
    j["base"] = nlohmann::json::parse(base.to_json());
    j["condition_channels"] = condition_channels;
    j["zero_init"] = zero_init;
    return j.dump();
}

ControlNetConfig ControlNetConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ControlNetConfig c;
    c.base = diffusion::DenoiserConfig::from_json(j.at("base").dump());
    c.condition_channels = j.at("condition_channels").get<int64_t>();
    c.zero_init = j.value("zero_init", true);
    return c;
}

ConditionTensor encode_condition(const core::LabelMap& label,
                                 const autoencoder::Vae& label_vae, double latent_scale) {
    core::OneHotLabel oh = core::one_hot_encode(label);
    autoencoder::GaussianLatent g = label_vae.encode(oh.data);
    ConditionTensor cond;
    cond.data = nn::tensor_scale(g.mean, latent_scale);
    return cond;
}

ControlNet::ControlNet(const ControlNetConfig& config, const diffusion::Denoiser& base,
                       uint64_t init_seed)
    : config_(config) {
    config_.validate();
    require(config_.base.to_json() == base.config().to_json(), Error::Kind::config,
            "ControlNet: config.base does not match the supplied base denoiser");
    Rng rng(derive_seed(init_seed, {kTagInit}));
    const int64_t L = config_.base.num_levels;
    auto width = [&](int64_t l) { return config_.base.base_width << l; };

    // Trainable copies of the base encoder half (including time embedding).
    temb_fc1_ = copy_linear(base.temb_fc1());
    temb_fc2_ = copy_linear(base.temb_fc2());
    stem_ = copy_conv(base.stem());
    for (const auto& d : base.downs()) {
        diffusion::Denoiser::Down down;
        down.block = copy_block(d.block);
        if (d.attention) down.attention = copy_attention(*d.attention);
        down.down = copy_conv(d.down);
        downs_.push_back(std::move(down));
    }
    mid1_ = copy_block(base.mid1());
    if (base.mid_attention()) mid_attention_ = copy_attention(*base.mid_attention());
    mid2_ = copy_block(base.mid2());

    // Zero-initialized projections keep the branch silent at initialization.
    bool zero = config_.zero_init;
    cond_in_ = nn::Conv3d(config_.condition_channels, config_.base.latent_channels, 1, 1,
                          rng, zero);
    for (int64_t l = 0; l + 1 < L; ++l)
        skip_proj_.emplace_back(width(l), width(l), 1, 1, rng, zero);
    mid_proj_ = nn::Conv3d(width(L - 1), width(L - 1), 1, 1, rng, zero);
}

diffusion::ControlInjection ControlNet::injection_graph(const Var& z_t, int64_t t,
                                                        const Var& cond) const {
    require(cond.shape().size() == 4 && cond.shape()[0] == config_.condition_channels,
            Error::Kind::shape, "ControlNet: condition must be [condition_channels,d,h,w]");
    for (int i = 1; i < 4; ++i)
        require(cond.shape()[static_cast<size_t>(i)] == z_t.shape()[static_cast<size_t>(i)],
                Error::Kind::shape,
                "ControlNet: condition spatial dims must match the image latent");

    Var sincos = Var::constant(
        diffusion::sinusoidal_time_embedding(t, config_.base.time_embedding_dim));
    Var temb = temb_fc2_(nn::silu(temb_fc1_(sincos)));

    Var h = stem_(nn::add(z_t, cond_in_(cond)));
    diffusion::ControlInjection inj;
    for (size_t i = 0; i < downs_.size(); ++i) {
        h = downs_[i].block(h, &temb);
        if (downs_[i].attention) h = (*downs_[i].attention)(h);
        inj.skip_add.push_back(skip_proj_[i](h));
        h = downs_[i].down(h);
    }
    h = mid1_(h, &temb);
    if (mid_attention_) h = (*mid_attention_)(h);
    h = mid2_(h, &temb);
    inj.mid_add = mid_proj_(h);
    return inj;
}

nn::NamedParams ControlNet::named_parameters() const {
    nn::ParamCollector pc;
    auto absorb = [&](const std::string& name, const auto& layer) {
        auto c = pc.scoped(name);
        layer.collect(c);
        pc.absorb(std::move(c));
    };
    absorb("temb.fc1", temb_fc1_);
    absorb("temb.fc2", temb_fc2_);
    absorb("cond_in", cond_in_);
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
    for (size_t i = 0; i < skip_proj_.size(); ++i)
        absorb("skip_proj" + std::to_string(i), skip_proj_[i]);
    absorb("mid_proj", mid_proj_);
    return pc.items;
}

void ControlNet::set_trainable(bool trainable) {
    auto params = named_parameters();
    for (auto& [name, var] : params) var.set_requires_grad(trainable);
}

void ControlNet::load_blobs(const orch::Checkpoint& ckpt) {
    auto params = named_parameters();
    for (auto& [name, var] : params) {
        const Tensor& blob = ckpt.blob(name);
        require(blob.shape() == var.shape(), Error::Kind::shape,
                "controlnet checkpoint: shape mismatch for " + name);
        var.value_mut() = blob;
    }
}

Var conditioned_predict_graph(const diffusion::Denoiser& base, const ControlNet& control,
                              const Var& z_t, int64_t t, const Var& cond) {
    diffusion::ControlInjection inj = control.injection_graph(z_t, t, cond);
    auto trace = base.encode_graph(z_t, t);
    return base.decode_graph(trace, &inj);
}

Tensor conditioned_predict_noise(const diffusion::Denoiser& base, const ControlNet& control,
                                 const Tensor& z_t, int64_t t, const ConditionTensor& cond) {
    return conditioned_predict_graph(base, control, Var::constant(z_t), t,
                                     Var::constant(cond.data))
        .value();
}

Tensor conditional_sample(const diffusion::Denoiser& base, const ControlNet& control,
                          const ConditionTensor& cond,
                          const diffusion::NoiseSchedule& schedule,
                          const nn::ShapeVec& shape, uint64_t seed,
                          diffusion::VarianceKind variance) {
    ConditionedSampler sampler(base, control, cond);
    return diffusion::sample_latent(sampler, schedule, shape, seed, variance);
}

double controlnet_loss_on_latents(ConditionedPredictor& predictor, const Tensor& z0,
                                  int64_t t, const Tensor& noise, const ConditionTensor& cond,
                                  const diffusion::NoiseSchedule& schedule) {
    Tensor z_t = diffusion::q_sample(z0, t, noise, schedule);
    Tensor pred = predictor.predict(z_t, t, cond);
    double loss = nn::tensor_mse(noise, pred);
    require(std::isfinite(loss), Error::Kind::numeric, "controlnet_loss: non-finite loss");
    return loss;
}

double controlnet_loss(const diffusion::Denoiser& base, const ControlNet& control,
                       const core::Volume& x, const core::LabelMap& label, int64_t t,
                       const Tensor& noise, const autoencoder::Vae& image_vae,
                       double image_scale, const autoencoder::Vae& label_vae,
                       double label_scale, const diffusion::NoiseSchedule& schedule) {
    require(x.shape.height == label.shape.height && x.shape.width == label.shape.width &&
                x.shape.depth == label.shape.depth,
            Error::Kind::validation, "controlnet_loss: unpaired volume/label shapes");
    Tensor z0 = nn::tensor_scale(image_vae.encode(x.to_tensor()).mean, image_scale);
    ConditionTensor cond = encode_condition(label, label_vae, label_scale);
    Var loss = controlnet_loss_graph(base, control, z0, t, noise, cond, schedule);
    return loss.value()[0];
}

Var controlnet_loss_graph(const diffusion::Denoiser& base, const ControlNet& control,
                          const Tensor& z0, int64_t t, const Tensor& noise,
                          const ConditionTensor& cond,
                          const diffusion::NoiseSchedule& schedule) {
    Tensor z_t = diffusion::q_sample(z0, t, noise, schedule);
    Var pred = conditioned_predict_graph(base, control, Var::constant(z_t), t,
                                         Var::constant(cond.data));
    return nn::mse(Var::constant(noise), pred);
}

ControlNetTrainResult train_controlnet(ControlNet& control, const diffusion::Denoiser& base,
                                       const std::vector<Tensor>& image_latents,
                                       const std::vector<ConditionTensor>& conditions,
                                       const diffusion::NoiseSchedule& schedule,
                                       const ControlNetTrainSettings& settings) {
    require(!image_latents.empty() && image_latents.size() == conditions.size(),
            Error::Kind::validation, "train_controlnet: latents/conditions must pair up");
    auto params = control.named_parameters();
    std::vector<Var> vars;
    for (auto& [name, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {settings.learning_rate, 0.9, 0.999, 1e-8, settings.weight_decay});

    ControlNetTrainResult result;
    for (int64_t epoch = 0; epoch < settings.epochs; ++epoch) {
        std::vector<size_t> order(image_latents.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(settings.seed, {kTagShuffle, static_cast<uint64_t>(epoch)}));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

        double epoch_loss = 0;
        for (size_t step = 0; step < order.size(); ++step) {
            Rng t_rng(derive_seed(settings.seed, {kTagTrainT, static_cast<uint64_t>(epoch),
                                                  static_cast<uint64_t>(step)}));
            int64_t t = diffusion::sample_timestep(t_rng, schedule.T);
            Rng noise_rng(derive_seed(settings.seed,
                                      {kTagTrainNoise, static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(step)}));
            Tensor noise = Tensor::randn(image_latents[order[step]].shape(), noise_rng);
            Var loss = controlnet_loss_graph(base, control, image_latents[order[step]], t,
                                             noise, conditions[order[step]], schedule);
            double value = loss.value()[0];
            require(std::isfinite(value), Error::Kind::numeric,
                    "train_controlnet: non-finite loss at epoch " + std::to_string(epoch) +
                        " batch " + std::to_string(step));
            opt.zero_grad();
            nn::backward(loss);
            opt.step();
            epoch_loss += value;
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

orch::Checkpoint make_controlnet_checkpoint(const ControlNet& control,
                                            const ControlNetTrainResult& result,
                                            const std::string& base_hash,
                                            const std::string& image_vae_hash,
                                            const std::string& label_vae_hash) {
    orch::Checkpoint ckpt;
    ckpt.kind = "controlnet";
    ckpt.config_json = control.config().to_json();
    nlohmann::json hist;
    hist["loss"] = result.loss_history;
    ckpt.history_json = hist.dump();
    ckpt.refs["base_diffusion"] = base_hash;
    ckpt.refs["image_vae"] = image_vae_hash;
    ckpt.refs["label_vae"] = label_vae_hash;
    for (const auto& [name, var] : control.named_parameters())
        ckpt.blobs.emplace_back(name, var.value());
    return ckpt;
}

ControlNet controlnet_from_checkpoint(const orch::Checkpoint& ckpt,
                                      const diffusion::Denoiser& base) {
    require(ckpt.kind == "controlnet", Error::Kind::validation,
            "controlnet_from_checkpoint: checkpoint kind is " + ckpt.kind);
    ControlNet control(ControlNetConfig::from_json(ckpt.config_json), base, 0);
    control.load_blobs(ckpt);
    return control;
}

}  // namespace voxsyn::controlnet
