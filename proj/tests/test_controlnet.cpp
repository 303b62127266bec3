// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "test_support.hpp"
#include "voxsyn/controlnet/controlnet.hpp"
#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/phantom/phantom.hpp"
#include "voxsyn/util/hash.hpp"

using namespace voxsyn;
using controlnet::ConditionTensor;
using controlnet::ControlNet;
using controlnet::ControlNetConfig;
using diffusion::Denoiser;
using diffusion::DenoiserConfig;
using diffusion::NoiseSchedule;
using nn::Tensor;

namespace {

DenoiserConfig base_config() {
    DenoiserConfig cfg;
    cfg.latent_channels = 2;
    cfg.base_width = 4;
    cfg.num_levels = 2;
    cfg.time_embedding_dim = 8;
    return cfg;
}

ControlNetConfig control_config() {
    ControlNetConfig cfg;
    cfg.base = base_config();
    cfg.condition_channels = 2;
    return cfg;
}

std::string weights_hash(const nn::NamedParams& params) {
    Fnv1a h;
    for (const auto& [name, v] : params) {
        h.update(name);
        h.update(v.value().data(), static_cast<size_t>(v.value().size()) * sizeof(double));
    }
    return h.hex();
}

ConditionTensor random_condition(uint64_t seed) {
    Rng rng(seed);
    ConditionTensor cond;
    cond.data = Tensor::randn({2, 2, 4, 4}, rng);
    return cond;
}

struct StubConditioned : controlnet::ConditionedPredictor {
    std::function<Tensor(const Tensor&, int64_t, const ConditionTensor&)> fn;
    Tensor predict(const Tensor& z, int64_t t, const ConditionTensor& c) override {
        return fn(z, t, c);
    }
};

}  // namespace

TEST_CASE("zero-init identity: conditioned prediction bit-equals the base for 10 triples") {
    Denoiser base(base_config(), 1);
    ControlNet control(control_config(), base, 2);
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor z = Tensor::randn({2, 2, 4, 4}, rng);
        int64_t t = rng.uniform_int(1, 20);
        ConditionTensor cond = random_condition(100 + static_cast<uint64_t>(trial));
        Tensor conditioned = controlnet::conditioned_predict_noise(base, control, z, t, cond);
        Tensor unconditioned = base.predict(z, t);
        CHECK(test::tensors_equal(conditioned, unconditioned));
    }
}

TEST_CASE("conditioned prediction keeps the latent shape and validates the condition") {
    Denoiser base(base_config(), 4);
    ControlNet control(control_config(), base, 5);
    Rng rng(6);
    Tensor z = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor cond = random_condition(7);
    CHECK(controlnet::conditioned_predict_noise(base, control, z, 3, cond).shape() ==
          z.shape());

    ConditionTensor bad;
    bad.data = Tensor::randn({2, 2, 4, 2}, rng);  // wrong spatial dims
    CHECK_THROWS_AS(controlnet::conditioned_predict_noise(base, control, z, 3, bad), Error);
}

TEST_CASE("after a few training steps a zero condition no longer reproduces the base") {
    Denoiser base(base_config(), 8);
    base.set_trainable(false);
    ControlNet control(control_config(), base, 9);
    NoiseSchedule schedule = diffusion::build_schedule(8, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    Rng rng(10);
    std::vector<Tensor> latents{Tensor::randn({2, 2, 4, 4}, rng)};
    std::vector<ConditionTensor> conds{random_condition(11)};

    controlnet::ControlNetTrainSettings settings;
    settings.epochs = 10;
    settings.learning_rate = 5e-3;
    settings.seed = 12;
    controlnet::train_controlnet(control, base, latents, conds, schedule, settings);

    Tensor z = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor zero_cond;
    zero_cond.data = Tensor::zeros({2, 2, 4, 4});
    Tensor conditioned = controlnet::conditioned_predict_noise(base, control, z, 3, zero_cond);
    Tensor unconditioned = base.predict(z, 3);
    CHECK(test::max_abs_diff(conditioned, unconditioned) > 0.0);
}

TEST_CASE("controlnet_loss stubs: exact prediction, zero-init equality, constant offset") {
    NoiseSchedule schedule = diffusion::build_schedule(8, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    Rng rng(13);
    Tensor z0 = Tensor::randn({2, 2, 4, 4}, rng);
    Tensor noise = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor cond = random_condition(14);

    StubConditioned truth;
    truth.fn = [&](const Tensor&, int64_t, const ConditionTensor&) { return noise; };
    CHECK(controlnet::controlnet_loss_on_latents(truth, z0, 4, noise, cond, schedule) == 0.0);

    StubConditioned offset;
    offset.fn = [&](const Tensor&, int64_t, const ConditionTensor&) {
        Tensor out = noise;
        for (int64_t i = 0; i < out.size(); ++i) out[i] += 0.5;
        return out;
    };
    CHECK(controlnet::controlnet_loss_on_latents(offset, z0, 4, noise, cond, schedule) ==
          doctest::Approx(0.25).epsilon(1e-12));

    // zero-init: the conditioned loss equals the base's unconditional loss
    Denoiser base(base_config(), 15);
    ControlNet control(control_config(), base, 16);
    nn::Var loss = controlnet::controlnet_loss_graph(base, control, z0, 4, noise, cond,
                                                     schedule);
    double unconditional = diffusion::diffusion_loss(base, z0, 4, noise, schedule);
    CHECK(loss.value()[0] == unconditional);
}

TEST_CASE("spec-level controlnet_loss rejects unpaired shapes") {
    Denoiser base(base_config(), 17);
    ControlNet control(control_config(), base, 18);
    NoiseSchedule schedule = diffusion::build_schedule(8, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    autoencoder::AutoencoderConfig vae_cfg;
    vae_cfg.in_channels = 1;
    vae_cfg.latent_channels = 2;
    vae_cfg.downsample_factor = 2;
    vae_cfg.base_width = 4;
    autoencoder::Vae image_vae(vae_cfg, 19);
    vae_cfg.in_channels = 5;
    vae_cfg.stage = autoencoder::VaeStage::label;
    autoencoder::Vae label_vae(vae_cfg, 20);

    core::Volume v = core::Volume::zeros({8, 8, 4, 1});
    v.normalized = true;
    core::LabelMap mismatched = core::LabelMap::zeros({8, 8, 8, 1});
    Rng rng(21);
    Tensor noise = Tensor::randn({2, 2, 4, 4}, rng);
    CHECK_THROWS_AS(controlnet::controlnet_loss(base, control, v, mismatched, 4, noise,
                                                image_vae, 1.0, label_vae, 1.0, schedule),
                    Error);
}

TEST_CASE("training leaves the frozen base bit-unchanged and is reproducible") {
    Denoiser base(base_config(), 22);
    base.set_trainable(false);
    std::string base_hash_before = weights_hash(base.named_parameters());

    NoiseSchedule schedule = diffusion::build_schedule(8, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    Rng rng(23);
    std::vector<Tensor> latents;
    std::vector<ConditionTensor> conds;
    for (int i = 0; i < 4; ++i) {
        latents.push_back(Tensor::randn({2, 2, 4, 4}, rng));
        conds.push_back(random_condition(30 + static_cast<uint64_t>(i)));
    }
    controlnet::ControlNetTrainSettings settings;
    settings.epochs = 30;
    settings.learning_rate = 2e-3;
    settings.seed = 24;

    ControlNet control_a(control_config(), base, 25);
    auto result_a = controlnet::train_controlnet(control_a, base, latents, conds, schedule,
                                                 settings);
    CHECK(weights_hash(base.named_parameters()) == base_hash_before);

    ControlNet control_b(control_config(), base, 25);
    auto result_b = controlnet::train_controlnet(control_b, base, latents, conds, schedule,
                                                 settings);
    CHECK(result_a.loss_history == result_b.loss_history);
    CHECK(weights_hash(control_a.named_parameters()) ==
          weights_hash(control_b.named_parameters()));

    // smoothed loss drops below its starting value (margin frozen from calibration)
    double head = result_a.loss_history.front();
    double tail = result_a.loss_history.back();
    CHECK(tail < head);
}

TEST_CASE("conditional_sample with a zero-init branch equals unconditional sampling") {
    Denoiser base(base_config(), 26);
    ControlNet control(control_config(), base, 27);
    NoiseSchedule schedule = diffusion::build_schedule(6, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    ConditionTensor cond = random_condition(28);

    Tensor conditional =
        controlnet::conditional_sample(base, control, cond, schedule, {2, 2, 4, 4}, 29);
    Tensor unconditional = diffusion::sample_latent(base, schedule, {2, 2, 4, 4}, 29);
    CHECK(test::tensors_equal(conditional, unconditional));

    Tensor repeat =
        controlnet::conditional_sample(base, control, cond, schedule, {2, 2, 4, 4}, 29);
    CHECK(test::tensors_equal(conditional, repeat));
}

TEST_CASE("a trained branch responds to the condition (different conds, same seed)") {
    Denoiser base(base_config(), 30);
    base.set_trainable(false);
    ControlNet control(control_config(), base, 31);
    NoiseSchedule schedule = diffusion::build_schedule(6, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    Rng rng(32);
    std::vector<Tensor> latents;
    std::vector<ConditionTensor> conds;
    for (int i = 0; i < 2; ++i) {
        latents.push_back(Tensor::randn({2, 2, 4, 4}, rng));
        conds.push_back(random_condition(40 + static_cast<uint64_t>(i)));
    }
    controlnet::ControlNetTrainSettings settings;
    settings.epochs = 20;
    settings.learning_rate = 5e-3;
    settings.seed = 33;
    controlnet::train_controlnet(control, base, latents, conds, schedule, settings);

    Tensor a = controlnet::conditional_sample(base, control, conds[0], schedule,
                                              {2, 2, 4, 4}, 34);
    Tensor b = controlnet::conditional_sample(base, control, conds[1], schedule,
                                              {2, 2, 4, 4}, 34);
    CHECK(test::max_abs_diff(a, b) > 0.0);
}

TEST_CASE("controlnet gradient check restricted to control-branch parameters") {
    Denoiser base(base_config(), 35);
    base.set_trainable(false);
    ControlNet control(control_config(), base, 36);
    NoiseSchedule schedule = diffusion::build_schedule(8, 1e-3, 0.1,
                                                       diffusion::ScheduleKind::linear);
    Rng rng(37);
    Tensor z0 = Tensor::randn({2, 2, 4, 4}, rng);
    Tensor noise = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor cond = random_condition(38);

    // zero-init projections have zero gradient flow through weights that
    // multiply zero activations, so train briefly first to decouple.
    controlnet::ControlNetTrainSettings warm;
    warm.epochs = 3;
    warm.learning_rate = 1e-2;
    warm.seed = 39;
    controlnet::train_controlnet(control, base, {z0}, {cond}, schedule, warm);

    std::vector<nn::Var> params;
    for (auto& [name, v] : control.named_parameters()) params.push_back(v);
    auto result = test::gradient_check(
        params,
        [&] {
            return controlnet::controlnet_loss_graph(base, control, z0, 4, noise, cond,
                                                     schedule);
        },
        3, 40);
    CHECK(result.checked >= 100);
    CHECK(result.max_rel_error < 1e-3);

    // frozen base accumulates no gradients
    for (auto& [name, v] : base.named_parameters()) CHECK_FALSE(v.has_grad());
}

TEST_CASE("encode_condition is deterministic and uses the posterior mean") {
    autoencoder::AutoencoderConfig vae_cfg;
    vae_cfg.in_channels = 5;
    vae_cfg.latent_channels = 2;
    vae_cfg.downsample_factor = 2;
    vae_cfg.base_width = 4;
    vae_cfg.stage = autoencoder::VaeStage::label;
    autoencoder::Vae label_vae(vae_cfg, 41);

    phantom::PhantomParams params;
    params.roi_shape = {16, 16, 8, 1};
    params.liver_axes_range = {{{4, 6}, {4, 6}, {2, 3}}};
    params.tumor_radius_range = {1.2, 1.8};
    core::LabelMap label = phantom::generate_phantom(5, params).label;

    ConditionTensor c1 = controlnet::encode_condition(label, label_vae, 1.5);
    ConditionTensor c2 = controlnet::encode_condition(label, label_vae, 1.5);
    CHECK(test::tensors_equal(c1.data, c2.data));
    CHECK(c1.data.shape() == nn::ShapeVec{2, 4, 8, 8});

    // matches mean * scale by construction
    core::OneHotLabel oh = core::one_hot_encode(label);
    Tensor expected = nn::tensor_scale(label_vae.encode(oh.data).mean, 1.5);
    CHECK(test::tensors_equal(c1.data, expected));

    // the all-background label maps to the encoder's fixed reference field
    core::LabelMap bg = core::LabelMap::zeros({16, 16, 8, 1});
    ConditionTensor cb1 = controlnet::encode_condition(bg, label_vae, 1.0);
    ConditionTensor cb2 = controlnet::encode_condition(bg, label_vae, 1.0);
    CHECK(test::tensors_equal(cb1.data, cb2.data));
}

TEST_CASE("controlnet checkpoint restores the branch and its references") {
    test::TempDir dir("ctrl_ckpt");
    Denoiser base(base_config(), 42);
    ControlNet control(control_config(), base, 43);
    controlnet::ControlNetTrainResult result;
    result.loss_history = {0.5};
    orch::Checkpoint ckpt = controlnet::make_controlnet_checkpoint(
        control, result, "basehash", "imagevae", "labelvae");
    ckpt.save(dir.path / "c.vsck");
    orch::Checkpoint loaded = orch::Checkpoint::load(dir.path / "c.vsck");
    CHECK(loaded.refs.at("base_diffusion") == "basehash");

    ControlNet restored = controlnet::controlnet_from_checkpoint(loaded, base);
    Rng rng(44);
    Tensor z = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor cond = random_condition(45);
    CHECK(test::tensors_equal(
        controlnet::conditioned_predict_noise(base, restored, z, 2, cond),
        controlnet::conditioned_predict_noise(base, control, z, 2, cond)));
}

TEST_CASE("a non-zero-init branch does not reproduce the base at initialization") {
    Denoiser base(base_config(), 50);
    ControlNetConfig cfg = control_config();
    cfg.zero_init = false;
    ControlNet control(cfg, base, 51);
    Rng rng(52);
    Tensor z = Tensor::randn({2, 2, 4, 4}, rng);
    ConditionTensor cond = random_condition(53);
    Tensor conditioned = controlnet::conditioned_predict_noise(base, control, z, 2, cond);
    CHECK(test::max_abs_diff(conditioned, base.predict(z, 2)) > 0.0);
}
