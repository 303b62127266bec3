// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxsyn/core/types.hpp"

namespace voxsyn::metrics {

/// 2|A∩B| / (|A|+|B|) for the class masks; 1 when both masks are empty.
double dice_coefficient(const core::LabelMap& a, const core::LabelMap& b, int class_id);

/// Mean over foreground classes (1..num_classes-1) of dice_coefficient.
double foreground_mean_dice(const core::LabelMap& a, const core::LabelMap& b);

enum class SliceAxis { axial, sagittal, coronal };

/// Frozen random 2D feature extractor standing in for the usual pretrained
/// backbone: conv3x3/s2 stack (8,16,32 channels) + global average pool +
/// linear head. Weights are a pure function of the seed.
struct FeatureExtractorSpec {
    uint64_t seed = 7;
    int64_t output_dim = 64;
    std::array<int64_t, 2> input_slice_size{24, 24};
};

struct GaussianStats {
    std::vector<double> mean;              // length d
    std::vector<double> covariance;        // row-major d x d, symmetric PSD
    int64_t sample_count = 0;
    int64_t dim = 0;

    void validate() const;
};

/// Features of every 2D slice along `axis`, resized bilinearly to the spec's
/// slice size, summarized as mean and (unbiased) covariance.
GaussianStats extract_slice_features(const std::vector<core::Volume>& volumes,
                                     SliceAxis axis, const FeatureExtractorSpec& spec);

/// Fréchet distance ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}); the matrix
/// square root uses the symmetric S1^{1/2} S2 S1^{1/2} formulation with
/// negative eigenvalues clipped within a -1e-6 tolerance.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

struct FidReport {
    double axial = 0;
    double sagittal = 0;
    double coronal = 0;
    double average = 0;
};

FidReport fid_report(const std::vector<core::Volume>& real,
                     const std::vector<core::Volume>& synthetic,
                     const FeatureExtractorSpec& spec);

/// Single-slice feature vector (exposed for purity/property tests).
std::vector<double> extract_features_for_test(const core::Volume& v, SliceAxis axis,
                                              int64_t slice_index,
                                              const FeatureExtractorSpec& spec);

}  // namespace voxsyn::metrics
