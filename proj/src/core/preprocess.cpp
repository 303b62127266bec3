// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/core/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace voxsyn::core {

Volume minmax_normalize(const Volume& v) {
    require(!v.data.empty(), Error::Kind::validation, "minmax_normalize: empty volume");
    double lo = v.data[0], hi = v.data[0];
    for (double x : v.data) {
        require(std::isfinite(x), Error::Kind::validation,
                "minmax_normalize: non-finite voxel value");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Volume out = v;
    out.normalized = true;
    if (hi == lo) {
        std::fill(out.data.begin(), out.data.end(), 0.0);
        return out;
    }
    // Division (not reciprocal multiply) so the extremes land exactly on 0
    // and 1, which also makes the map idempotent bit-for-bit.
    double range = hi - lo;
    for (auto& x : out.data) x = (x - lo) / range;
    return out;
}

namespace {

int64_t clamped_start(int64_t center, int64_t extent, int64_t dim) {
    int64_t start = center - extent / 2;
    return std::clamp<int64_t>(start, 0, dim - extent);
}

struct CropBox {
    int64_t h0, w0, d0;
};

CropBox crop_box(const VolumeShape& src, Voxel center, const VolumeShape& roi) {
    roi.validate();
    auto check = [](int64_t roi_dim, int64_t src_dim, const char* axis) {
        require(roi_dim <= src_dim, Error::Kind::validation,
                std::string("crop_roi: roi larger than volume on axis ") + axis);
    };
    check(roi.height, src.height, "height");
    check(roi.width, src.width, "width");
    check(roi.depth, src.depth, "depth");
    return CropBox{clamped_start(center.h, roi.height, src.height),
                   clamped_start(center.w, roi.width, src.width),
                   clamped_start(center.d, roi.depth, src.depth)};
}

}  // namespace

Volume crop_roi(const Volume& v, Voxel center, VolumeShape roi_shape) {
    roi_shape.channels = 1;
    CropBox box = crop_box(v.shape, center, roi_shape);
    Volume out = Volume::zeros(roi_shape);
    out.spacing = v.spacing;
    out.normalized = v.normalized;
    for (int64_t d = 0; d < roi_shape.depth; ++d)
        for (int64_t h = 0; h < roi_shape.height; ++h)
            for (int64_t w = 0; w < roi_shape.width; ++w)
                out.at(h, w, d) = v.at(box.h0 + h, box.w0 + w, box.d0 + d);
    return out;
}

LabelMap crop_roi(const LabelMap& l, Voxel center, VolumeShape roi_shape) {
    roi_shape.channels = 1;
    CropBox box = crop_box(l.shape, center, roi_shape);
    LabelMap out = LabelMap::zeros(roi_shape, l.num_classes);
    for (int64_t d = 0; d < roi_shape.depth; ++d)
        for (int64_t h = 0; h < roi_shape.height; ++h)
            for (int64_t w = 0; w < roi_shape.width; ++w)
                out.at(h, w, d) = l.at(box.h0 + h, box.w0 + w, box.d0 + d);
    return out;
}

OneHotLabel one_hot_encode(const LabelMap& l) {
    l.validate();
    int64_t n = l.shape.voxels();
    OneHotLabel oh;
    oh.num_classes = l.num_classes;
    oh.data = nn::Tensor({l.num_classes, l.shape.depth, l.shape.height, l.shape.width});
    for (int64_t i = 0; i < n; ++i)
        oh.data[static_cast<int64_t>(l.data[static_cast<size_t>(i)]) * n + i] = 1.0;
    return oh;
}

LabelMap argmax_decode(const nn::Tensor& soft, int num_classes) {
    require(soft.rank() == 4, Error::Kind::shape, "argmax_decode: expected [C,D,H,W]");
    require(soft.dim(0) == num_classes, Error::Kind::shape,
            "argmax_decode: channel count does not match num_classes");
    int64_t n = soft.size() / num_classes;
    LabelMap out = LabelMap::zeros(
        VolumeShape{soft.dim(2), soft.dim(3), soft.dim(1), 1}, num_classes);
    for (int64_t i = 0; i < n; ++i) {
        int best = 0;
        double best_v = soft[i];
        for (int c = 1; c < num_classes; ++c) {
            double v = soft[c * n + i];
            if (v > best_v) {  // strictly greater keeps the lowest index on ties
                best_v = v;
                best = c;
            }
        }
        out.data[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
    }
    return out;
}

}  // namespace voxsyn::core
