// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "voxsyn/core/types.hpp"

namespace voxsyn::orch {

/// FVOL container: "FVOL1\n" magic, u32 little-endian header length, UTF-8
/// JSON header {shape, dtype, spacing, extra}, then raw little-endian payload
/// in C order (last axis fastest). f32 and u8 payloads are supported.
struct FvolField {
    std::vector<int64_t> shape;            // [C,D,H,W] or [D,H,W]
    std::string dtype;                     // "f32" | "u8"
    std::array<double, 3> spacing{1, 1, 1};
    std::string extra_json = "{}";         // free-form metadata object
    std::vector<float> f32;                // populated when dtype == "f32"
    std::vector<uint8_t> u8;               // populated when dtype == "u8"
};

void write_fvol(const std::filesystem::path& path, const FvolField& field);
FvolField read_fvol(const std::filesystem::path& path);

// Volume/LabelMap adapters (f32 and u8 payloads respectively).
void write_volume(const std::filesystem::path& path, const core::Volume& v);
core::Volume read_volume(const std::filesystem::path& path);
void write_label(const std::filesystem::path& path, const core::LabelMap& l);
core::LabelMap read_label(const std::filesystem::path& path);

}  // namespace voxsyn::orch
