// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: phantom generation, stage training, synthesis,
// evaluation and report building over a single run directory.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "voxsyn/metrics/metrics.hpp"
#include "voxsyn/orch/fvol.hpp"
#include "voxsyn/orch/pipeline.hpp"
#include "voxsyn/orch/report.hpp"

namespace fs = std::filesystem;
using namespace voxsyn;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_override;
    int64_t seed_override = -1;
};

orch::ExperimentConfig load_config(const CommonOpts& opts) {
    orch::ConfigTree tree = opts.config_path.empty()
                                ? orch::ConfigTree{}
                                : orch::ConfigTree::load(opts.config_path);
    if (!opts.out_override.empty()) tree.set("run.out_root", opts.out_override);
    if (opts.seed_override >= 0) tree.set("run.seed", std::to_string(opts.seed_override));
    return orch::ExperimentConfig::from_tree(std::move(tree));
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config file");
    cmd->add_option("--out", opts.out_override, "output root (overrides run.out_root)");
    cmd->add_option("--seed", opts.seed_override, "seed override (overrides run.seed)");
}

int run_stages(const CommonOpts& opts, const std::vector<orch::Stage>& stages) {
    orch::ExperimentConfig cfg = load_config(opts);
    auto outcomes = orch::run_pipeline(cfg, stages);
    for (const auto& o : outcomes)
        std::cout << (o.skipped ? "skipped " : "ran     ") << orch::to_string(o.stage) << "\n";
    std::cout << "run directory: " << cfg.run_dir().string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxsyn: paired synthetic volume generation and segmentation harness"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* phantom_cmd = app.add_subcommand("phantom", "generate the phantom dataset");
    add_common(phantom_cmd, opts);

    auto* train_cmd = app.add_subcommand("train", "train one pipeline component");
    std::string train_what;
    std::string train_stage = "label";
    std::string train_variant = "unet";
    std::string train_data = "real";
    train_cmd->add_option("component", train_what, "vae | diffusion | controlnet | seg")
        ->required();
    train_cmd->add_option("--stage", train_stage, "label | image (vae/diffusion)");
    train_cmd->add_option("--variant", train_variant, "segmenter variant (seg)");
    train_cmd->add_option("--data", train_data, "real | mixed (seg)");
    add_common(train_cmd, opts);

    auto* generate_cmd = app.add_subcommand("generate", "synthesize paired volumes/labels");
    add_common(generate_cmd, opts);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate metrics");
    std::string eval_what;
    std::string eval_a, eval_b;
    int eval_class = 1;
    eval_cmd->add_option("metric", eval_what, "fid | dice")->required();
    eval_cmd->add_option("--a", eval_a, "first label map (dice)");
    eval_cmd->add_option("--b", eval_b, "second label map (dice)");
    eval_cmd->add_option("--class", eval_class, "class id (dice)");
    add_common(eval_cmd, opts);

    auto* run_cmd = app.add_subcommand("run", "run the full pipeline (or selected stages)");
    std::vector<std::string> run_stage_names;
    run_cmd->add_option("--stage", run_stage_names, "subset of stages to run (repeatable)");
    add_common(run_cmd, opts);

    auto* report_cmd = app.add_subcommand("report", "rebuild the report for a completed run");
    add_common(report_cmd, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (phantom_cmd->parsed()) return run_stages(opts, {orch::Stage::phantom});

        if (train_cmd->parsed()) {
            std::vector<orch::Stage> stages;
            if (train_what == "vae") {
                stages = {train_stage == "label" ? orch::Stage::vae_label
                                                 : orch::Stage::vae_image};
            } else if (train_what == "diffusion") {
                stages = {train_stage == "label" ? orch::Stage::diff_label
                                                 : orch::Stage::diff_image};
            } else if (train_what == "controlnet") {
                stages = {orch::Stage::controlnet};
            } else if (train_what == "seg") {
                stages = {train_data == "mixed" ? orch::Stage::seg_mixed
                                                : orch::Stage::seg_real};
            } else {
                std::cerr << "unknown component: " << train_what << "\n";
                return 2;
            }
            return run_stages(opts, stages);
        }

        if (generate_cmd->parsed()) return run_stages(opts, {orch::Stage::generate});

        if (eval_cmd->parsed()) {
            if (eval_what == "dice") {
                if (eval_a.empty() || eval_b.empty()) {
                    std::cerr << "eval dice needs --a and --b label maps\n";
                    return 2;
                }
                core::LabelMap a = orch::read_label(eval_a);
                core::LabelMap b = orch::read_label(eval_b);
                std::cout << "dice[class " << eval_class
                          << "] = " << metrics::dice_coefficient(a, b, eval_class) << "\n";
                return 0;
            }
            if (eval_what == "fid") {
                orch::ExperimentConfig cfg = load_config(opts);
                std::string json = orch::build_report(cfg);
                std::cout << json;
                return 0;
            }
            std::cerr << "unknown metric: " << eval_what << "\n";
            return 2;
        }

        if (run_cmd->parsed()) {
            std::vector<orch::Stage> stages;
            if (run_stage_names.empty()) {
                stages = orch::all_stages();
            } else {
                for (const auto& name : run_stage_names)
                    stages.push_back(orch::stage_from_string(name));
            }
            return run_stages(opts, stages);
        }

        if (report_cmd->parsed()) return run_stages(opts, {orch::Stage::report});
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
