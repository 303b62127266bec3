// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>

#include "voxsyn/controlnet/controlnet.hpp"
#include "voxsyn/orch/manifest.hpp"

namespace voxsyn::duo {

/// The four trained generative checkpoints plus the ControlNet branch,
/// assembled with lineage verification: every recorded reference hash must
/// match the checkpoint actually supplied.
struct DuoModels {
    autoencoder::Vae label_vae;
    diffusion::Denoiser label_denoiser;
    diffusion::NoiseSchedule label_schedule;
    double label_diffusion_scale = 1.0;
    double label_condition_scale = 1.0;  // label VAE's stored latent scale
    nn::ShapeVec label_latent_shape;

    autoencoder::Vae image_vae;
    diffusion::Denoiser image_denoiser;
    diffusion::NoiseSchedule image_schedule;
    double image_scale = 1.0;
    nn::ShapeVec image_latent_shape;

    controlnet::ControlNet control;

    std::map<std::string, std::string> lineage;  // stage name -> content hash
};

/// Loads and cross-checks the five checkpoints; a reference hash mismatch is
/// rejected with a lineage error.
DuoModels assemble_models(const orch::Checkpoint& label_vae,
                          const orch::Checkpoint& label_diff,
                          const orch::Checkpoint& image_vae,
                          const orch::Checkpoint& image_diff,
                          const orch::Checkpoint& control);

/// Stage 1: latent sample -> label-VAE decode -> argmax discretization.
core::LabelMap generate_synthetic_label(DuoModels& models, uint64_t seed,
                                        diffusion::VarianceKind variance =
                                            diffusion::VarianceKind::posterior);

/// Stage 2: encode the label condition, run conditional ancestral sampling,
/// decode through the image VAE and clamp to [0,1].
core::Volume generate_paired_volume(DuoModels& models, const core::LabelMap& label,
                                    uint64_t seed,
                                    diffusion::VarianceKind variance =
                                        diffusion::VarianceKind::posterior);

struct SyntheticPair {
    core::Volume volume;
    core::LabelMap label;
    uint64_t label_seed = 0;
    uint64_t volume_seed = 0;
    std::map<std::string, std::string> lineage;
    bool degenerate_label = false;  // empty liver class
};

SyntheticPair generate_pair(DuoModels& models, uint64_t label_seed, uint64_t volume_seed,
                            diffusion::VarianceKind variance =
                                diffusion::VarianceKind::posterior);

struct SynthesizeSettings {
    int64_t count = 8;
    uint64_t base_seed = 0;
    diffusion::VarianceKind variance = diffusion::VarianceKind::posterior;
    /// Re-render mode: condition on these real labels instead of stage-1
    /// samples (one per generated pair, cycled).
    std::vector<core::LabelMap> rerender_labels;
};

/// Writes `count` pairs (provenance "synthetic", split train) plus a manifest
/// at out_dir/manifest_synth.json. Label seeds are base_seed+i, volume seeds
/// base_seed+i+2^31. Byte-identical across reruns.
orch::DatasetManifest synthesize_dataset(DuoModels& models,
                                         const SynthesizeSettings& settings,
                                         const std::filesystem::path& out_dir);

/// Validates that a manifest record's lineage matches the assembled models.
void check_lineage(const orch::ManifestRecord& record, const DuoModels& models);

}  // namespace voxsyn::duo
