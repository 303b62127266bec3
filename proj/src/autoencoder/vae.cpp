// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/autoencoder/vae.hpp"

#include <cmath>

#include <json.hpp>

#include "voxsyn/util/rng.hpp"

namespace voxsyn::autoencoder {

using nn::Tensor;
using nn::Var;

namespace {

constexpr double kLogVarMin = -30.0;
constexpr double kLogVarMax = 20.0;
constexpr uint64_t kTagInit = 0x76616531ull;
constexpr uint64_t kTagNoise = 0x766e6f69ull;
constexpr uint64_t kTagShuffle = 0x76736866ull;

void check_encode_shape(const Tensor& x, const AutoencoderConfig& cfg) {
    require(x.rank() == 4, Error::Kind::shape, "encode: input must be [C,D,H,W]");
    require(x.dim(0) == cfg.in_channels, Error::Kind::shape,
            "encode: channel axis has " + std::to_string(x.dim(0)) + " channels, expected " +
                std::to_string(cfg.in_channels));
    const char* names[3] = {"depth", "height", "width"};
    for (int i = 1; i <= 3; ++i)
        require(x.dim(i) % cfg.downsample_factor == 0, Error::Kind::shape,
                std::string("encode: ") + names[i - 1] + " axis (" +
                    std::to_string(x.dim(i)) + ") not divisible by downsample factor " +
                    std::to_string(cfg.downsample_factor));
}

}  // namespace

int64_t AutoencoderConfig::levels() const {
    int64_t f = downsample_factor;
    int64_t l = 0;
    while (f > 1) {
        f /= 2;
        ++l;
    }
    return l;
}

void AutoencoderConfig::validate() const {
    require(in_channels >= 1 && latent_channels >= 1 && base_width >= 1,
            Error::Kind::config, "AutoencoderConfig: channel counts must be >= 1");
    require(downsample_factor >= 1 &&
                (downsample_factor & (downsample_factor - 1)) == 0,
            Error::Kind::config, "AutoencoderConfig: downsample_factor must be a power of two");
    require(kl_weight >= 0.0, Error::Kind::config, "AutoencoderConfig: kl_weight must be >= 0");
}

std::string AutoencoderConfig::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["latent_channels"] = latent_channels;
    j["downsample_factor"] = downsample_factor;
    j["base_width"] = base_width;
    j["kl_weight"] = kl_weight;
    j["stage"] = stage == VaeStage::label ? "label" : "image";
    j["l1_reconstruction"] = l1_reconstruction;
    return j.dump();
}

AutoencoderConfig AutoencoderConfig::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    AutoencoderConfig c;
    c.in_channels = j.at("in_channels").get<int64_t>();
    c.latent_channels = j.at("latent_channels").get<int64_t>();
    c.downsample_factor = j.at("downsample_factor").get<int64_t>();
    c.base_width = j.at("base_width").get<int64_t>();
    c.kl_weight = j.at("kl_weight").get<double>();
    c.stage = j.at("stage").get<std::string>() == "label" ? VaeStage::label : VaeStage::image;
    c.l1_reconstruction = j.value("l1_reconstruction", false);
    return c;
}

void GaussianLatent::validate() const {
    require(mean.same_shape(log_variance), Error::Kind::shape,
            "GaussianLatent: mean/log_variance shape mismatch");
    require(mean.all_finite() && log_variance.all_finite(), Error::Kind::validation,
            "GaussianLatent: non-finite values");
}

Tensor reparameterize(const GaussianLatent& g, uint64_t seed) {
    g.validate();
    Rng rng(derive_seed(seed, {kTagNoise}));
    Tensor z(g.mean.shape());
    for (int64_t i = 0; i < z.size(); ++i)
        z[i] = g.mean[i] + std::exp(0.5 * g.log_variance[i]) * rng.normal();
    return z;
}

double kl_divergence(const GaussianLatent& g) {
    g.validate();
    double acc = 0;
    for (int64_t i = 0; i < g.mean.size(); ++i) {
        double mu = g.mean[i];
        double lv = g.log_variance[i];
        acc += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    double out = acc / static_cast<double>(g.mean.size());
    require(std::isfinite(out), Error::Kind::numeric, "kl_divergence: non-finite result");
    return out;
}

VaeLossValue vae_loss(const Tensor& input, const Tensor& reconstruction,
                      const GaussianLatent& g, double kl_weight, bool l1_reconstruction) {
    require(input.same_shape(reconstruction), Error::Kind::shape,
            "vae_loss: input/reconstruction shape mismatch");
    VaeLossValue out;
    if (l1_reconstruction) {
        double acc = 0;
        for (int64_t i = 0; i < input.size(); ++i)
            acc += std::abs(input[i] - reconstruction[i]);
        out.reconstruction = acc / static_cast<double>(input.size());
    } else {
        out.reconstruction = nn::tensor_mse(input, reconstruction);
    }
    out.kl = kl_divergence(g);
    out.total = out.reconstruction + kl_weight * out.kl;
    return out;
}

Vae::Vae(AutoencoderConfig config, uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(derive_seed(init_seed, {kTagInit}));
    const int64_t levels = config_.levels();
    auto width = [&](int64_t l) { return config_.base_width << l; };

    stem_ = nn::Conv3d(config_.in_channels, width(0), 3, 1, rng);
    for (int64_t l = 0; l < levels; ++l) {
        Level lvl;
        lvl.block = nn::ResBlock(width(l), width(l), 0, rng);
        lvl.down = nn::Conv3d(width(l), width(l + 1), 3, 2, rng);
        enc_levels_.push_back(std::move(lvl));
    }
    enc_bottom_ = nn::ResBlock(width(levels), width(levels), 0, rng);
    enc_out_norm_ = nn::GroupNorm(width(levels));
    enc_out_conv_ = nn::Conv3d(width(levels), 2 * config_.latent_channels, 1, 1, rng);

    dec_in_conv_ = nn::Conv3d(config_.latent_channels, width(levels), 1, 1, rng);
    dec_bottom_ = nn::ResBlock(width(levels), width(levels), 0, rng);
    for (int64_t l = levels - 1; l >= 0; --l) {
        UpLevel lvl;
        lvl.conv = nn::Conv3d(width(l + 1), width(l), 3, 1, rng);
        lvl.block = nn::ResBlock(width(l), width(l), 0, rng);
        dec_levels_.push_back(std::move(lvl));
    }
    dec_out_norm_ = nn::GroupNorm(width(0));
    dec_out_conv_ = nn::Conv3d(width(0), config_.in_channels, 3, 1, rng);
}

Var Vae::encode_graph(const Var& x, Var& mean, Var& logvar) const {
    Var h = stem_(x);
    for (const auto& lvl : enc_levels_) h = lvl.down(lvl.block(h));
    h = enc_bottom_(h);
    h = enc_out_conv_(nn::silu(enc_out_norm_(h)));

    // Split [2*latent, d, h, w] into mean and clamped log-variance.
    const auto& shape = h.shape();
    int64_t lc = config_.latent_channels;
    int64_t slab = h.value().size() / (2 * lc);
    nn::ShapeVec half_shape{lc, shape[1], shape[2], shape[3]};

    Tensor mean_t(half_shape), logvar_t(half_shape);
    // Mean/logvar split is realized as two gather ops so gradients route back.
    std::copy(h.value().data(), h.value().data() + lc * slab, mean_t.data());
    std::copy(h.value().data() + lc * slab, h.value().data() + 2 * lc * slab,
              logvar_t.data());
    int64_t n = lc * slab;
    mean = nn::make_op(std::move(mean_t), {h}, [n](nn::Node& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        for (int64_t i = 0; i < n; ++i) gin[i] += self.grad[i];
    });
    Var logvar_raw = nn::make_op(std::move(logvar_t), {h}, [n](nn::Node& self) {
        if (!self.inputs[0]->requires_grad) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        for (int64_t i = 0; i < n; ++i) gin[n + i] += self.grad[i];
    });
    logvar = nn::clamp_v(logvar_raw, kLogVarMin, kLogVarMax);
    return h;
}

Var Vae::decode_graph(const Var& z) const {
    Var h = dec_bottom_(dec_in_conv_(z));
    for (const auto& lvl : dec_levels_) h = lvl.block(lvl.conv(nn::upsample_nearest2x(h)));
    h = dec_out_conv_(nn::silu(dec_out_norm_(h)));
    if (config_.stage == VaeStage::image) h = nn::sigmoid(h);
    return h;
}

GaussianLatent Vae::encode(const Tensor& x) const {
    check_encode_shape(x, config_);
    Var mean, logvar;
    encode_graph(Var::constant(x), mean, logvar);
    GaussianLatent g;
    g.mean = mean.value();
    g.log_variance = logvar.value();
    return g;
}

Tensor Vae::decode(const Tensor& z) const {
    require(z.rank() == 4 && z.dim(0) == config_.latent_channels, Error::Kind::shape,
            "decode: latent must be [latent_channels,d,h,w]");
    return decode_graph(Var::constant(z)).value();
}

Vae::LossGraph Vae::loss_graph(const Tensor& input, const Tensor& noise) const {
    check_encode_shape(input, config_);
    Var x = Var::constant(input);
    Var mean, logvar;
    encode_graph(x, mean, logvar);
    require(noise.same_shape(mean.value()), Error::Kind::shape,
            "loss_graph: noise shape must match the latent");

    Var eta = Var::constant(noise);
    Var z = nn::add(mean, nn::mul(nn::exp_v(nn::mul_scalar(logvar, 0.5)), eta));
    Var recon = decode_graph(z);

    Var rec_loss = config_.l1_reconstruction
                       ? nn::mean_all(nn::sqrt_v(nn::add_scalar(nn::square(nn::sub(recon, x)), 1e-12)))
                       : nn::mse(recon, x);
    // KL = mean(0.5 * (mu^2 + exp(lv) - 1 - lv))
    Var kl = nn::mean_all(nn::mul_scalar(
        nn::add_scalar(nn::sub(nn::add(nn::square(mean), nn::exp_v(logvar)), logvar), -1.0),
        0.5));

    LossGraph out;
    out.total = nn::add(rec_loss, nn::mul_scalar(kl, config_.kl_weight));
    out.reconstruction = rec_loss.value()[0];
    out.kl = kl.value()[0];
    return out;
}

nn::NamedParams Vae::named_parameters() const {
    nn::ParamCollector pc;
    auto sub = [&](const char* name) { return pc.scoped(name); };
    {
        auto c = sub("enc.stem");
        stem_.collect(c);
        pc.absorb(std::move(c));
    }
    for (size_t i = 0; i < enc_levels_.size(); ++i) {
        auto c = sub(("enc.l" + std::to_string(i) + ".block").c_str());
        enc_levels_[i].block.collect(c);
        pc.absorb(std::move(c));
        auto d = sub(("enc.l" + std::to_string(i) + ".down").c_str());
        enc_levels_[i].down.collect(d);
        pc.absorb(std::move(d));
    }
    {
        auto c = sub("enc.bottom");
        enc_bottom_.collect(c);
        pc.absorb(std::move(c));
        auto n = sub("enc.out_norm");
        enc_out_norm_.collect(n);
        pc.absorb(std::move(n));
        auto o = sub("enc.out_conv");
        enc_out_conv_.collect(o);
        pc.absorb(std::move(o));
    }
    {
        auto c = sub("dec.in_conv");
        dec_in_conv_.collect(c);
        pc.absorb(std::move(c));
        auto b = sub("dec.bottom");
        dec_bottom_.collect(b);
        pc.absorb(std::move(b));
    }
    for (size_t i = 0; i < dec_levels_.size(); ++i) {
        auto c = sub(("dec.l" + std::to_string(i) + ".conv").c_str());
        dec_levels_[i].conv.collect(c);
        pc.absorb(std::move(c));
        auto b = sub(("dec.l" + std::to_string(i) + ".block").c_str());
        dec_levels_[i].block.collect(b);
        pc.absorb(std::move(b));
    }
    {
        auto n = sub("dec.out_norm");
        dec_out_norm_.collect(n);
        pc.absorb(std::move(n));
        auto o = sub("dec.out_conv");
        dec_out_conv_.collect(o);
        pc.absorb(std::move(o));
    }
    return pc.items;
}

void Vae::set_trainable(bool trainable) {
    auto params = named_parameters();
    for (auto& [name, var] : params) var.set_requires_grad(trainable);
}

void Vae::load_blobs(const orch::Checkpoint& ckpt) {
    auto params = named_parameters();
    for (auto& [name, var] : params) {
        const Tensor& blob = ckpt.blob(name);
        require(blob.shape() == var.shape(), Error::Kind::shape,
                "vae checkpoint: shape mismatch for " + name);
        var.value_mut() = blob;
    }
}

VaeTrainResult train_vae(Vae& model, const std::vector<Tensor>& inputs,
                         const VaeTrainSettings& settings) {
    require(!inputs.empty(), Error::Kind::validation, "train_vae: empty input set");
    auto params = model.named_parameters();
    std::vector<Var> vars;
    for (auto& [name, v] : params) vars.push_back(v);
    nn::AdamW opt(vars, {settings.learning_rate, 0.9, 0.999, 1e-8, settings.weight_decay});

    // Latent shape probe for noise draws.
    GaussianLatent probe = model.encode(inputs[0]);

    VaeTrainResult result;
    for (int64_t epoch = 0; epoch < settings.epochs; ++epoch) {
        std::vector<size_t> order(inputs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(settings.seed, {kTagShuffle, static_cast<uint64_t>(epoch)}));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);

        VaeEpochStats stats;
        for (size_t step = 0; step < order.size(); ++step) {
            Rng noise_rng(derive_seed(settings.seed,
                                      {kTagNoise, static_cast<uint64_t>(epoch),
                                       static_cast<uint64_t>(step)}));
            Tensor noise = Tensor::randn(probe.mean.shape(), noise_rng);
            auto loss = model.loss_graph(inputs[order[step]], noise);
            double total = loss.total.value()[0];
            require(std::isfinite(total), Error::Kind::numeric,
                    "train_vae: non-finite loss at epoch " + std::to_string(epoch) +
                        " batch " + std::to_string(step) + " (recon " +
                        std::to_string(loss.reconstruction) + ", kl " +
                        std::to_string(loss.kl) + ")");
            opt.zero_grad();
            nn::backward(loss.total);
            opt.step();
            stats.total += total;
            stats.reconstruction += loss.reconstruction;
            stats.kl += loss.kl;
        }
        double n = static_cast<double>(order.size());
        stats.total /= n;
        stats.reconstruction /= n;
        stats.kl /= n;
        result.history.push_back(stats);
    }
    result.latent_scale = compute_latent_scale(model, inputs);
    return result;
}

double compute_latent_scale(const Vae& model, const std::vector<Tensor>& inputs) {
    double sum = 0, sum_sq = 0;
    int64_t n = 0;
    for (const auto& input : inputs) {
        GaussianLatent g = model.encode(input);
        for (int64_t i = 0; i < g.mean.size(); ++i) {
            sum += g.mean[i];
            sum_sq += g.mean[i] * g.mean[i];
            ++n;
        }
    }
    if (n == 0) return 1.0;
    double mean = sum / static_cast<double>(n);
    double var = sum_sq / static_cast<double>(n) - mean * mean;
    if (var <= 1e-12) return 1.0;
    return 1.0 / std::sqrt(var);
}

orch::Checkpoint make_vae_checkpoint(const Vae& model, const VaeTrainResult& result) {
    orch::Checkpoint ckpt;
    ckpt.kind = "vae";
    ckpt.config_json = model.config().to_json();
    nlohmann::json hist;
    hist["epochs"] = result.history.size();
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& e : result.history) {
        nlohmann::json row;
        row["total"] = e.total;
        row["reconstruction"] = e.reconstruction;
        row["kl"] = e.kl;
        losses.push_back(row);
    }
    hist["losses"] = losses;
    ckpt.history_json = hist.dump();
    ckpt.constants["latent_scale"] = result.latent_scale;
    for (const auto& [name, var] : model.named_parameters())
        ckpt.blobs.emplace_back(name, var.value());
    return ckpt;
}

Vae vae_from_checkpoint(const orch::Checkpoint& ckpt) {
    require(ckpt.kind == "vae", Error::Kind::validation,
            "vae_from_checkpoint: checkpoint kind is " + ckpt.kind);
    Vae model(AutoencoderConfig::from_json(ckpt.config_json), 0);
    model.load_blobs(ckpt);
    return model;
}

}  // namespace voxsyn::autoencoder
