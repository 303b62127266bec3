// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/duo/pipeline.hpp"

#include <algorithm>

#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/orch/fvol.hpp"

namespace voxsyn::duo {

using nn::Tensor;

DuoModels assemble_models(const orch::Checkpoint& label_vae,
                          const orch::Checkpoint& label_diff,
                          const orch::Checkpoint& image_vae,
                          const orch::Checkpoint& image_diff,
                          const orch::Checkpoint& control) {
    auto check_ref = [](const orch::Checkpoint& ckpt, const std::string& key,
                        const std::string& expected, const char* what) {
        auto it = ckpt.refs.find(key);
        require(it != ckpt.refs.end(), Error::Kind::lineage,
                std::string("assemble_models: ") + what + " lacks a " + key + " reference");
        require(it->second == expected, Error::Kind::lineage,
                std::string("assemble_models: ") + what + " references " + key + " " +
                    it->second + " but " + expected + " was supplied");
    };
    check_ref(label_diff, "vae", label_vae.content_hash(), "label diffusion");
    check_ref(image_diff, "vae", image_vae.content_hash(), "image diffusion");
    check_ref(control, "base_diffusion", image_diff.content_hash(), "controlnet");
    check_ref(control, "image_vae", image_vae.content_hash(), "controlnet");
    check_ref(control, "label_vae", label_vae.content_hash(), "controlnet");

    auto scale_of = [](const orch::Checkpoint& c) {
        auto it = c.constants.find("latent_scale");
        return it == c.constants.end() ? 1.0 : it->second;
    };

    diffusion::Denoiser image_denoiser = diffusion::denoiser_from_checkpoint(image_diff);
    DuoModels models{
        autoencoder::vae_from_checkpoint(label_vae),
        diffusion::denoiser_from_checkpoint(label_diff),
        diffusion::schedule_from_checkpoint(label_diff),
        scale_of(label_diff),
        scale_of(label_vae),
        diffusion::latent_shape_from_checkpoint(label_diff),
        autoencoder::vae_from_checkpoint(image_vae),
        std::move(image_denoiser),
        diffusion::schedule_from_checkpoint(image_diff),
        scale_of(image_diff),
        diffusion::latent_shape_from_checkpoint(image_diff),
        controlnet::ControlNet(controlnet::ControlNetConfig::from_json(control.config_json),
                               diffusion::denoiser_from_checkpoint(image_diff), 0),
        {},
    };
    models.control.load_blobs(control);
    models.lineage["label_vae"] = label_vae.content_hash();
    models.lineage["label_diffusion"] = label_diff.content_hash();
    models.lineage["image_vae"] = image_vae.content_hash();
    models.lineage["image_diffusion"] = image_diff.content_hash();
    models.lineage["controlnet"] = control.content_hash();
    return models;
}

core::LabelMap generate_synthetic_label(DuoModels& models, uint64_t seed,
                                        diffusion::VarianceKind variance) {
    // The denoiser operates in scaled latent space; undo before decoding.
    Tensor z = diffusion::sample_latent(models.label_denoiser, models.label_schedule,
                                        models.label_latent_shape, seed, variance);
    Tensor soft = models.label_vae.decode(
        nn::tensor_scale(z, 1.0 / models.label_diffusion_scale));
    return core::argmax_decode(soft, static_cast<int>(models.label_vae.config().in_channels));
}

core::Volume generate_paired_volume(DuoModels& models, const core::LabelMap& label,
                                    uint64_t seed, diffusion::VarianceKind variance) {
    controlnet::ConditionTensor cond =
        controlnet::encode_condition(label, models.label_vae, models.label_condition_scale);
    Tensor z = controlnet::conditional_sample(models.image_denoiser, models.control, cond,
                                              models.image_schedule,
                                              models.image_latent_shape, seed, variance);
    Tensor decoded = models.image_vae.decode(nn::tensor_scale(z, 1.0 / models.image_scale));
    for (int64_t i = 0; i < decoded.size(); ++i)
        decoded[i] = std::clamp(decoded[i], 0.0, 1.0);
    return core::Volume::from_tensor(decoded, true);
}

SyntheticPair generate_pair(DuoModels& models, uint64_t label_seed, uint64_t volume_seed,
                            diffusion::VarianceKind variance) {
    SyntheticPair pair;
    pair.label = generate_synthetic_label(models, label_seed, variance);
    pair.volume = generate_paired_volume(models, pair.label, volume_seed, variance);
    pair.label_seed = label_seed;
    pair.volume_seed = volume_seed;
    pair.lineage = models.lineage;
    pair.degenerate_label =
        std::none_of(pair.label.data.begin(), pair.label.data.end(),
                     [](uint8_t v) { return v == 1; });
    pair.volume.validate();
    pair.label.validate();
    require(pair.volume.shape.voxels() == pair.label.shape.voxels(), Error::Kind::shape,
            "generate_pair: volume/label shape mismatch");
    return pair;
}

orch::DatasetManifest synthesize_dataset(DuoModels& models,
                                         const SynthesizeSettings& settings,
                                         const std::filesystem::path& out_dir) {
    require(settings.count > 0, Error::Kind::validation,
            "synthesize_dataset: count must be > 0");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "synthetic", ec);
    require(!ec, Error::Kind::io,
            "synthesize_dataset: cannot create " + (out_dir / "synthetic").string());

    orch::DatasetManifest manifest;
    for (int64_t i = 0; i < settings.count; ++i) {
        uint64_t label_seed = settings.base_seed + static_cast<uint64_t>(i);
        uint64_t volume_seed =
            settings.base_seed + static_cast<uint64_t>(i) + (uint64_t{1} << 31);

        SyntheticPair pair;
        if (!settings.rerender_labels.empty()) {
            const core::LabelMap& real_label =
                settings.rerender_labels[static_cast<size_t>(i) %
                                         settings.rerender_labels.size()];
            pair.label = real_label;
            pair.volume =
                generate_paired_volume(models, real_label, volume_seed, settings.variance);
            pair.label_seed = label_seed;
            pair.volume_seed = volume_seed;
            pair.lineage = models.lineage;
            pair.degenerate_label =
                std::none_of(pair.label.data.begin(), pair.label.data.end(),
                             [](uint8_t v) { return v == 1; });
        } else {
            pair = generate_pair(models, label_seed, volume_seed, settings.variance);
        }

        char id[32];
        std::snprintf(id, sizeof(id), "synthetic_%04lld", static_cast<long long>(i));
        std::string vol_rel = std::string("synthetic/") + id + "_vol.fvol";
        std::string lab_rel = std::string("synthetic/") + id + "_lab.fvol";
        try {
            orch::write_volume(out_dir / vol_rel, pair.volume);
            orch::write_label(out_dir / lab_rel, pair.label);
        } catch (const Error& e) {
            raise(Error::Kind::io, std::string("synthesize_dataset: ") + e.what());
        }

        orch::ManifestRecord rec;
        rec.id = id;
        rec.volume_path = vol_rel;
        rec.label_path = lab_rel;
        rec.provenance = orch::Provenance::synthetic;
        rec.split = orch::Split::train;
        rec.flags["degenerate_label"] = pair.degenerate_label;
        rec.lineage = pair.lineage;
        manifest.records.push_back(std::move(rec));
    }
    manifest.save(out_dir / "manifest_synth.json");
    return manifest;
}

void check_lineage(const orch::ManifestRecord& record, const DuoModels& models) {
    for (const auto& [stage, hash] : models.lineage) {
        auto it = record.lineage.find(stage);
        require(it != record.lineage.end() && it->second == hash, Error::Kind::lineage,
                "check_lineage: record " + record.id + " does not match checkpoint " + stage);
    }
}

}  // namespace voxsyn::duo
