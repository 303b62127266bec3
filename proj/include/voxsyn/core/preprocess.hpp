// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "voxsyn/core/types.hpp"

namespace voxsyn::core {

/// Affine rescale of intensities to [0,1]. A constant volume maps to all
/// zeros. Rejects non-finite input.
Volume minmax_normalize(const Volume& v);

/// Axis-aligned crop of extent `roi_shape` centered at `center`; boxes that
/// would overrun a boundary are shifted inward so the extent is preserved.
Volume crop_roi(const Volume& v, Voxel center, VolumeShape roi_shape);
LabelMap crop_roi(const LabelMap& l, Voxel center, VolumeShape roi_shape);

/// Expands a LabelMap into per-class indicator channels.
OneHotLabel one_hot_encode(const LabelMap& l);

/// Collapses a soft per-class field to a LabelMap by per-voxel argmax; ties
/// break to the lowest class index.
LabelMap argmax_decode(const nn::Tensor& soft, int num_classes);

}  // namespace voxsyn::core
