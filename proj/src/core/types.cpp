// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/core/types.hpp"

#include <cmath>
#include <string>

namespace voxsyn::core {

void VolumeShape::require_divisible(int64_t factor) const {
    auto check = [factor](int64_t dim, const char* axis) {
        require(dim % factor == 0, Error::Kind::shape,
                std::string("spatial dimension not divisible by ") +
                    std::to_string(factor) + " on axis " + axis + " (got " +
                    std::to_string(dim) + ")");
    };
    check(height, "height");
    check(width, "width");
    check(depth, "depth");
}

Volume Volume::zeros(VolumeShape s) {
    s.channels = 1;
    s.validate();
    Volume v;
    v.shape = s;
    v.data.assign(static_cast<size_t>(s.voxels()), 0.0);
    return v;
}

void Volume::validate() const {
    shape.validate();
    require(shape.channels == 1, Error::Kind::validation, "Volume: channels must be 1");
    require(static_cast<int64_t>(data.size()) == shape.voxels(), Error::Kind::shape,
            "Volume: data size does not match shape");
    require(spacing[0] > 0 && spacing[1] > 0 && spacing[2] > 0, Error::Kind::validation,
            "Volume: spacing must be positive");
    for (double x : data) {
        require(std::isfinite(x), Error::Kind::validation,
                "Volume: non-finite voxel value");
        if (normalized)
            require(x >= 0.0 && x <= 1.0, Error::Kind::validation,
                    "Volume: normalized flag set but voxel outside [0,1]");
    }
}

nn::Tensor Volume::to_tensor() const {
    nn::Tensor t({1, shape.depth, shape.height, shape.width});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = data[static_cast<size_t>(i)];
    return t;
}

Volume Volume::from_tensor(const nn::Tensor& t, bool normalized) {
    require(t.rank() == 4 && t.dim(0) == 1, Error::Kind::shape,
            "Volume::from_tensor: expected [1,D,H,W]");
    Volume v;
    v.shape = VolumeShape{t.dim(2), t.dim(3), t.dim(1), 1};
    v.normalized = normalized;
    v.data.resize(static_cast<size_t>(t.size()));
    for (int64_t i = 0; i < t.size(); ++i) v.data[static_cast<size_t>(i)] = t[i];
    return v;
}

LabelMap LabelMap::zeros(VolumeShape s, int num_classes) {
    s.channels = 1;
    s.validate();
    LabelMap l;
    l.shape = s;
    l.num_classes = num_classes;
    l.data.assign(static_cast<size_t>(s.voxels()), 0);
    return l;
}

void LabelMap::validate() const {
    shape.validate();
    require(num_classes >= 1, Error::Kind::validation, "LabelMap: num_classes must be >= 1");
    require(static_cast<int64_t>(data.size()) == shape.voxels(), Error::Kind::shape,
            "LabelMap: data size does not match shape");
    for (uint8_t c : data)
        require(c < num_classes, Error::Kind::validation,
                "LabelMap: voxel class " + std::to_string(int(c)) +
                    " outside [0," + std::to_string(num_classes) + ")");
}

}  // namespace voxsyn::core
