// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "voxsyn/nn/tensor.hpp"

namespace voxsyn::orch {

/// Weight/metadata container ("VSCK1\n" magic, JSON header, raw f64 blobs).
/// The content hash covers kind + config + history + constants + every blob,
/// so it identifies both architecture and weights; load() recomputes and
/// verifies it.
struct Checkpoint {
    std::string kind;                                  // vae | diffusion | controlnet | segmenter
    std::string config_json = "{}";                    // module config snapshot
    std::string history_json = "{}";                   // training history
    std::map<std::string, std::string> refs;           // upstream checkpoint hashes
    std::map<std::string, double> constants;           // e.g. latent_scale
    std::vector<std::pair<std::string, nn::Tensor>> blobs;

    std::string content_hash() const;

    const nn::Tensor& blob(const std::string& name) const;
    bool has_blob(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace voxsyn::orch
