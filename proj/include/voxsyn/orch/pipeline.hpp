// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "voxsyn/duo/pipeline.hpp"
#include "voxsyn/orch/config.hpp"
#include "voxsyn/orch/manifest.hpp"
#include "voxsyn/phantom/phantom.hpp"
#include "voxsyn/segmentation/train.hpp"

namespace voxsyn::orch {

enum class Stage {
    phantom,
    vae_label,
    vae_image,
    diff_label,
    diff_image,
    controlnet,
    generate,
    seg_real,
    seg_mixed,
    report,
};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
std::vector<Stage> all_stages();

/// Fully parsed experiment settings; every knob lives in the config file
/// (see README for the schema) with the desk-scale defaults below.
struct ExperimentConfig {
    ConfigTree tree;  // canonical source; hashed for stage skipping

    std::string run_name = "run";
    std::filesystem::path out_root = "out";
    uint64_t seed = 1;

    static ExperimentConfig from_tree(ConfigTree tree);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    std::filesystem::path run_dir() const { return out_root / run_name; }
    std::string config_hash() const;

    phantom::PhantomParams phantom_params() const;
    int64_t phantom_count() const;
    std::array<int64_t, 3> phantom_splits() const;
    uint64_t phantom_base_seed() const;
};

struct StageOutcome {
    Stage stage;
    bool skipped = false;
};

/// Executes the requested stages in dependency order. Each stage validates
/// its prerequisites (dependency error naming the missing artifact), writes
/// its outputs under the run directory, and records a completion marker; a
/// rerun with an identical config hash skips completed stages.
std::vector<StageOutcome> run_pipeline(const ExperimentConfig& config,
                                       const std::vector<Stage>& stages);

/// Convenience: run every stage.
std::vector<StageOutcome> run_pipeline(const ExperimentConfig& config);

/// Builds report.json + report.txt from a completed run directory and
/// returns the JSON text.
std::string build_report(const ExperimentConfig& config);

/// Assembles the five generative checkpoints of a completed run with full
/// lineage verification.
duo::DuoModels load_run_models(const ExperimentConfig& config);

/// Paired sample loader used by segmentation stages and the CLI.
std::vector<segmentation::SegSample> load_split_samples(const DatasetManifest& manifest,
                                                        Split split,
                                                        const std::filesystem::path& base_dir);

}  // namespace voxsyn::orch
