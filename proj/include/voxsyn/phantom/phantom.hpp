// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "voxsyn/core/types.hpp"
#include "voxsyn/orch/manifest.hpp"

namespace voxsyn::phantom {

/// Procedural generator settings. Defaults target a (32,32,16) ROI with
/// class-separable intensities.
struct PhantomParams {
    core::VolumeShape roi_shape{32, 32, 16, 1};
    // Semi-axes in voxels, per axis (h, w, d): {min, max}.
    std::array<std::array<double, 2>, 3> liver_axes_range{{{7.0, 11.0}, {7.0, 11.0}, {4.0, 6.0}}};
    std::array<int, 2> vessel_count_range{1, 3};  // per vessel class
    double tumor_probability = 0.6;
    std::array<double, 2> tumor_radius_range{1.8, 3.0};
    // Index = class id: background, liver, portal vein, hepatic vein, tumor.
    std::array<double, 5> intensity_means{0.05, 0.55, 0.75, 0.70, 0.30};
    double noise_sigma = 0.03;
    double bias_field_amplitude = 0.10;

    void validate() const;
};

/// One generated paired sample; volume and label share the ROI shape.
struct PhantomSample {
    core::Volume volume;
    core::LabelMap label;
    uint64_t seed = 0;
    bool has_tumor = false;
};

/// Deterministic per seed: the same (seed, params) produce a bit-identical
/// sample. The liver is voxelized from a star-shaped implicit surface and
/// reduced to its largest 6-connected component, vessels are tube sweeps
/// clipped to the liver, and the tumor (when drawn) is a blob whose support
/// fits inside the liver.
PhantomSample generate_phantom(uint64_t seed, const PhantomParams& params);

/// Generates `count` samples with seeds base_seed..base_seed+count-1, writes
/// volume/label FVOL pairs under out_dir/data and a manifest at
/// out_dir/manifest.json. Split assignment follows seed order.
orch::DatasetManifest generate_phantom_dataset(int64_t count, uint64_t base_seed,
                                               const PhantomParams& params,
                                               std::array<int64_t, 3> splits,
                                               const std::filesystem::path& out_dir);

/// Labels each 6-connected component of `mask` (true voxels); returns the
/// number of components. Exposed for the connectivity invariant tests.
int count_components_6(const std::vector<uint8_t>& mask, const core::VolumeShape& shape);

}  // namespace voxsyn::phantom
