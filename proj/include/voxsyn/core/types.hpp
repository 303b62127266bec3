// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "voxsyn/nn/tensor.hpp"
#include "voxsyn/util/error.hpp"

namespace voxsyn::core {

/// Spatial extents in voxels. Storage order throughout the project is
/// [depth][height][width] with width fastest, matching the on-disk layout.
struct VolumeShape {
    int64_t height = 0;
    int64_t width = 0;
    int64_t depth = 0;
    int64_t channels = 1;

    int64_t voxels() const { return height * width * depth; }

    bool operator==(const VolumeShape&) const = default;

    void validate() const {
        require(height >= 1 && width >= 1 && depth >= 1 && channels >= 1,
                Error::Kind::validation, "VolumeShape: all dimensions must be >= 1");
    }

    /// Throws naming the offending axis when a spatial dim is not divisible
    /// by `factor`.
    void require_divisible(int64_t factor) const;
};

/// Voxel coordinate ordered (height, width, depth) to match VolumeShape.
struct Voxel {
    int64_t h = 0;
    int64_t w = 0;
    int64_t d = 0;
};

/// Single-channel scalar field over a 3D grid. Intensities live in [0,1]
/// once `normalized` is set.
struct Volume {
    std::vector<double> data;  // [d][h][w], w fastest
    VolumeShape shape;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    bool normalized = false;

    double& at(int64_t h, int64_t w, int64_t d) {
        return data[static_cast<size_t>((d * shape.height + h) * shape.width + w)];
    }
    double at(int64_t h, int64_t w, int64_t d) const {
        return data[static_cast<size_t>((d * shape.height + h) * shape.width + w)];
    }

    static Volume zeros(VolumeShape shape);

    void validate() const;

    /// Copies into a [1, D, H, W] tensor for the NN stack.
    nn::Tensor to_tensor() const;
    static Volume from_tensor(const nn::Tensor& t, bool normalized);
};

/// Integer class field: 0 background, 1 liver, 2 portal vein, 3 hepatic
/// vein, 4 tumor by default.
struct LabelMap {
    std::vector<uint8_t> data;  // [d][h][w], w fastest
    VolumeShape shape;
    int num_classes = 5;

    uint8_t& at(int64_t h, int64_t w, int64_t d) {
        return data[static_cast<size_t>((d * shape.height + h) * shape.width + w)];
    }
    uint8_t at(int64_t h, int64_t w, int64_t d) const {
        return data[static_cast<size_t>((d * shape.height + h) * shape.width + w)];
    }

    static LabelMap zeros(VolumeShape shape, int num_classes = 5);

    void validate() const;

    bool operator==(const LabelMap&) const = default;
};

/// One-indicator-channel-per-class expansion of a LabelMap: [C, D, H, W].
struct OneHotLabel {
    nn::Tensor data;
    int num_classes = 5;
};

}  // namespace voxsyn::core
