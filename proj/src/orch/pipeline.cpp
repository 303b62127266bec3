// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/pipeline.hpp"

#include <fstream>

#include <json.hpp>

#include "voxsyn/controlnet/controlnet.hpp"
#include "voxsyn/core/preprocess.hpp"
#include "voxsyn/duo/pipeline.hpp"
#include "voxsyn/metrics/metrics.hpp"
#include "voxsyn/orch/checkpoint.hpp"
#include "voxsyn/orch/fvol.hpp"
#include "voxsyn/orch/report.hpp"
#include "voxsyn/util/hash.hpp"

namespace voxsyn::orch {

namespace {

namespace fs = std::filesystem;
using autoencoder::Vae;
using diffusion::Denoiser;
using nn::Tensor;

constexpr uint64_t kTagVaeLabel = 0x564c4142ull;
constexpr uint64_t kTagVaeImage = 0x56494d47ull;
constexpr uint64_t kTagDiffLabel = 0x444c4142ull;
constexpr uint64_t kTagDiffImage = 0x44494d47ull;
constexpr uint64_t kTagControl = 0x434e4554ull;
constexpr uint64_t kTagSeg = 0x53454730ull;

}  // namespace

std::string to_string(Stage s) {
    switch (s) {
        case Stage::phantom: return "phantom";
        case Stage::vae_label: return "vae_label";
        case Stage::vae_image: return "vae_image";
        case Stage::diff_label: return "diff_label";
        case Stage::diff_image: return "diff_image";
        case Stage::controlnet: return "controlnet";
        case Stage::generate: return "generate";
        case Stage::seg_real: return "seg_real";
        case Stage::seg_mixed: return "seg_mixed";
        default: return "report";
    }
}

Stage stage_from_string(const std::string& s) {
    for (Stage stage : all_stages())
        if (to_string(stage) == s) return stage;
    raise(Error::Kind::config, "unknown stage: " + s);
}

std::vector<Stage> all_stages() {
    return {Stage::phantom,    Stage::vae_label, Stage::vae_image, Stage::diff_label,
            Stage::diff_image, Stage::controlnet, Stage::generate,  Stage::seg_real,
            Stage::seg_mixed,  Stage::report};
}

ExperimentConfig ExperimentConfig::from_tree(ConfigTree tree) {
    ExperimentConfig cfg;
    cfg.run_name = tree.get_string("run.name", "run");
    const char* env_root = std::getenv("VOXSYN_OUT");
    cfg.out_root = tree.get_string("run.out_root", env_root ? env_root : "out");
    int64_t seed = tree.get_int("run.seed", 1);
    cfg.seed = static_cast<uint64_t>(seed);
    cfg.tree = std::move(tree);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    return from_tree(ConfigTree::load(path));
}

std::string ExperimentConfig::config_hash() const {
    return hash_hex(tree.canonical());
}

phantom::PhantomParams ExperimentConfig::phantom_params() const {
    phantom::PhantomParams p;
    auto roi = tree.get_int_list("phantom.roi", {32, 32, 16});
    require(roi.size() == 3, Error::Kind::config, "phantom.roi must have 3 entries");
    p.roi_shape = core::VolumeShape{roi[0], roi[1], roi[2], 1};
    auto axes = tree.get_double_list("phantom.liver_axes", {7, 11, 7, 11, 4, 6});
    require(axes.size() == 6, Error::Kind::config, "phantom.liver_axes must have 6 entries");
    p.liver_axes_range = {{{axes[0], axes[1]}, {axes[2], axes[3]}, {axes[4], axes[5]}}};
    auto vessels = tree.get_int_list("phantom.vessel_count", {1, 3});
    require(vessels.size() == 2, Error::Kind::config, "phantom.vessel_count must have 2 entries");
    p.vessel_count_range = {static_cast<int>(vessels[0]), static_cast<int>(vessels[1])};
    p.tumor_probability = tree.get_double("phantom.tumor_probability", 0.6);
    auto tr = tree.get_double_list("phantom.tumor_radius", {1.8, 3.0});
    require(tr.size() == 2, Error::Kind::config, "phantom.tumor_radius must have 2 entries");
    p.tumor_radius_range = {tr[0], tr[1]};
    auto means = tree.get_double_list("phantom.intensity_means",
                                      {0.05, 0.55, 0.75, 0.70, 0.30});
    require(means.size() == 5, Error::Kind::config,
            "phantom.intensity_means must have 5 entries");
    std::copy(means.begin(), means.end(), p.intensity_means.begin());
    p.noise_sigma = tree.get_double("phantom.noise_sigma", 0.03);
    p.bias_field_amplitude = tree.get_double("phantom.bias_amplitude", 0.10);
    return p;
}

int64_t ExperimentConfig::phantom_count() const { return tree.get_int("phantom.count", 12); }

std::array<int64_t, 3> ExperimentConfig::phantom_splits() const {
    auto s = tree.get_int_list("phantom.splits", {8, 2, 2});
    require(s.size() == 3, Error::Kind::config, "phantom.splits must have 3 entries");
    return {s[0], s[1], s[2]};
}

uint64_t ExperimentConfig::phantom_base_seed() const {
    return static_cast<uint64_t>(tree.get_int("phantom.base_seed", 100));
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

namespace {

fs::path ckpt_path(const ExperimentConfig& cfg, const std::string& name) {
    return cfg.run_dir() / "ckpt" / (name + ".vsck");
}

void need_artifact(const fs::path& path, const std::string& what) {
    require(fs::exists(path), Error::Kind::dependency,
            "missing dependency: " + what + " (" + path.string() + ")");
}

fs::path marker_path(const ExperimentConfig& cfg, Stage stage) {
    return cfg.run_dir() / "stages" / (to_string(stage) + ".done");
}

bool stage_complete(const ExperimentConfig& cfg, Stage stage) {
    fs::path marker = marker_path(cfg, stage);
    if (!fs::exists(marker)) return false;
    std::ifstream in(marker);
    if (!in.good()) return false;
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        return j.value("config_hash", "") == cfg.config_hash();
    } catch (...) {
        return false;
    }
}

void mark_complete(const ExperimentConfig& cfg, Stage stage) {
    fs::create_directories(cfg.run_dir() / "stages");
    nlohmann::json j;
    j["stage"] = to_string(stage);
    j["config_hash"] = cfg.config_hash();
    std::ofstream out(marker_path(cfg, stage), std::ios::trunc);
    require(out.good(), Error::Kind::io, "cannot write stage marker for " + to_string(stage));
    out << j.dump(2) << "\n";
}

std::vector<Tensor> volume_tensors(const std::vector<segmentation::SegSample>& samples) {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.volume.to_tensor());
    return out;
}

std::vector<Tensor> onehot_tensors(const std::vector<segmentation::SegSample>& samples) {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(core::one_hot_encode(s.label).data);
    return out;
}

autoencoder::AutoencoderConfig vae_config_from(const ExperimentConfig& cfg,
                                               const std::string& prefix, bool label_stage) {
    autoencoder::AutoencoderConfig c;
    c.in_channels = label_stage ? 5 : 1;
    c.latent_channels = cfg.tree.get_int(prefix + ".latent_channels", 4);
    c.downsample_factor = cfg.tree.get_int(prefix + ".downsample_factor", 4);
    c.base_width = cfg.tree.get_int(prefix + ".base_width", 16);
    c.kl_weight = cfg.tree.get_double(prefix + ".kl_weight", 1e-7);
    c.stage = label_stage ? autoencoder::VaeStage::label : autoencoder::VaeStage::image;
    c.l1_reconstruction = cfg.tree.get_bool(prefix + ".l1_reconstruction", false);
    c.validate();
    return c;
}

autoencoder::VaeTrainSettings vae_settings_from(const ExperimentConfig& cfg,
                                                const std::string& prefix, uint64_t tag) {
    autoencoder::VaeTrainSettings s;
    s.epochs = cfg.tree.get_int(prefix + ".epochs", 40);
    s.learning_rate = cfg.tree.get_double(prefix + ".lr", 1e-3);
    require(s.learning_rate >= 0, Error::Kind::config, prefix + ".lr must be >= 0");
    s.weight_decay = cfg.tree.get_double(prefix + ".weight_decay", 0.0);
    s.seed = derive_seed(cfg.seed, {tag});
    return s;
}

diffusion::DenoiserConfig denoiser_config_from(const ExperimentConfig& cfg,
                                               const std::string& prefix,
                                               int64_t latent_channels) {
    diffusion::DenoiserConfig c;
    c.latent_channels = latent_channels;
    c.base_width = cfg.tree.get_int(prefix + ".base_width", 16);
    c.num_levels = cfg.tree.get_int(prefix + ".num_levels", 2);
    c.time_embedding_dim = cfg.tree.get_int(prefix + ".temb_dim", 32);
    c.attention_levels = cfg.tree.get_int_list(prefix + ".attention_levels", {});
    c.validate();
    return c;
}

diffusion::NoiseSchedule schedule_from(const ExperimentConfig& cfg, const std::string& prefix) {
    int64_t T = cfg.tree.get_int(prefix + ".T", 50);
    double b0 = cfg.tree.get_double(prefix + ".beta_start", 1e-4);
    double b1 = cfg.tree.get_double(prefix + ".beta_end", 0.02);
    std::string kind = cfg.tree.get_string(prefix + ".kind", "linear");
    require(kind == "linear" || kind == "scaled_linear", Error::Kind::config,
            prefix + ".kind must be linear or scaled_linear");
    return diffusion::build_schedule(T, b0, b1,
                                     kind == "linear" ? diffusion::ScheduleKind::linear
                                                      : diffusion::ScheduleKind::scaled_linear);
}

DatasetManifest load_real_manifest(const ExperimentConfig& cfg) {
    fs::path path = cfg.run_dir() / "manifest.json";
    need_artifact(path, "phantom manifest");
    DatasetManifest m = DatasetManifest::load(path);
    m.validate(cfg.run_dir());
    return m;
}

// --- Stage bodies ---------------------------------------------------------

void stage_phantom(const ExperimentConfig& cfg) {
    phantom::generate_phantom_dataset(cfg.phantom_count(), cfg.phantom_base_seed(),
                                      cfg.phantom_params(), cfg.phantom_splits(),
                                      cfg.run_dir());
}

void stage_vae(const ExperimentConfig& cfg, bool label_stage) {
    DatasetManifest manifest = load_real_manifest(cfg);
    auto train = load_split_samples(manifest, Split::train, cfg.run_dir());
    require(!train.empty(), Error::Kind::validation, "vae stage: empty train split");

    std::string prefix = label_stage ? "vae_label" : "vae_image";
    uint64_t tag = label_stage ? kTagVaeLabel : kTagVaeImage;
    Vae model(vae_config_from(cfg, prefix, label_stage), derive_seed(cfg.seed, {tag, 1}));
    auto inputs = label_stage ? onehot_tensors(train) : volume_tensors(train);
    auto result = autoencoder::train_vae(model, inputs, vae_settings_from(cfg, prefix, tag));

    fs::create_directories(cfg.run_dir() / "ckpt");
    autoencoder::make_vae_checkpoint(model, result).save(ckpt_path(cfg, prefix));
}

void stage_diffusion(const ExperimentConfig& cfg, bool label_stage) {
    std::string vae_name = label_stage ? "vae_label" : "vae_image";
    std::string prefix = label_stage ? "diff_label" : "diff_image";
    need_artifact(ckpt_path(cfg, vae_name), vae_name + " checkpoint");

    Checkpoint vae_ckpt = Checkpoint::load(ckpt_path(cfg, vae_name));
    Vae vae = autoencoder::vae_from_checkpoint(vae_ckpt);
    vae.set_trainable(false);

    DatasetManifest manifest = load_real_manifest(cfg);
    auto train = load_split_samples(manifest, Split::train, cfg.run_dir());
    auto inputs = label_stage ? onehot_tensors(train) : volume_tensors(train);

    double scale = 1.0;
    auto latents = diffusion::encode_latents(vae, inputs, &scale);

    diffusion::NoiseSchedule schedule = schedule_from(cfg, prefix);
    uint64_t tag = label_stage ? kTagDiffLabel : kTagDiffImage;
    Denoiser model(denoiser_config_from(cfg, prefix, vae.config().latent_channels),
                   derive_seed(cfg.seed, {tag, 1}));

    diffusion::DiffusionTrainSettings settings;
    settings.epochs = cfg.tree.get_int(prefix + ".epochs", 40);
    settings.learning_rate = cfg.tree.get_double(prefix + ".lr", 1e-3);
    require(settings.learning_rate >= 0, Error::Kind::config, prefix + ".lr must be >= 0");
    settings.weight_decay = cfg.tree.get_double(prefix + ".weight_decay", 0.0);
    settings.seed = derive_seed(cfg.seed, {tag, 2});
    auto result = diffusion::train_diffusion(model, latents, schedule, settings);

    diffusion::make_diffusion_checkpoint(model, schedule, scale, latents[0].shape(), result,
                                         vae_ckpt.content_hash())
        .save(ckpt_path(cfg, prefix));
}

void stage_controlnet(const ExperimentConfig& cfg) {
    for (const char* dep : {"vae_image", "vae_label", "diff_image"})
        need_artifact(ckpt_path(cfg, dep), std::string(dep) + " checkpoint");

    Checkpoint image_vae_ckpt = Checkpoint::load(ckpt_path(cfg, "vae_image"));
    Checkpoint label_vae_ckpt = Checkpoint::load(ckpt_path(cfg, "vae_label"));
    Checkpoint base_ckpt = Checkpoint::load(ckpt_path(cfg, "diff_image"));

    Vae image_vae = autoencoder::vae_from_checkpoint(image_vae_ckpt);
    Vae label_vae = autoencoder::vae_from_checkpoint(label_vae_ckpt);
    image_vae.set_trainable(false);
    label_vae.set_trainable(false);
    Denoiser base = diffusion::denoiser_from_checkpoint(base_ckpt);
    base.set_trainable(false);
    diffusion::NoiseSchedule schedule = diffusion::schedule_from_checkpoint(base_ckpt);
    double image_scale = base_ckpt.constants.at("latent_scale");
    double label_scale = label_vae_ckpt.constants.at("latent_scale");

    DatasetManifest manifest = load_real_manifest(cfg);
    auto train = load_split_samples(manifest, Split::train, cfg.run_dir());
    std::vector<Tensor> image_latents;
    std::vector<controlnet::ConditionTensor> conditions;
    for (const auto& s : train) {
        image_latents.push_back(
            nn::tensor_scale(image_vae.encode(s.volume.to_tensor()).mean, image_scale));
        conditions.push_back(controlnet::encode_condition(s.label, label_vae, label_scale));
    }

    controlnet::ControlNetConfig ctrl_cfg;
    ctrl_cfg.base = base.config();
    ctrl_cfg.condition_channels = label_vae.config().latent_channels;
    controlnet::ControlNet control(ctrl_cfg, base, derive_seed(cfg.seed, {kTagControl, 1}));

    controlnet::ControlNetTrainSettings settings;
    settings.epochs = cfg.tree.get_int("controlnet.epochs", 40);
    settings.learning_rate = cfg.tree.get_double("controlnet.lr", 1e-3);
    require(settings.learning_rate >= 0, Error::Kind::config, "controlnet.lr must be >= 0");
    settings.weight_decay = cfg.tree.get_double("controlnet.weight_decay", 0.0);
    settings.seed = derive_seed(cfg.seed, {kTagControl, 2});
    auto result = controlnet::train_controlnet(control, base, image_latents, conditions,
                                               schedule, settings);

    controlnet::make_controlnet_checkpoint(control, result, base_ckpt.content_hash(),
                                           image_vae_ckpt.content_hash(),
                                           label_vae_ckpt.content_hash())
        .save(ckpt_path(cfg, "controlnet"));
}

duo::DuoModels load_duo_models(const ExperimentConfig& cfg) {
    for (const char* dep : {"vae_label", "diff_label", "vae_image", "diff_image", "controlnet"})
        need_artifact(ckpt_path(cfg, dep), std::string(dep) + " checkpoint");
    return duo::assemble_models(Checkpoint::load(ckpt_path(cfg, "vae_label")),
                                Checkpoint::load(ckpt_path(cfg, "diff_label")),
                                Checkpoint::load(ckpt_path(cfg, "vae_image")),
                                Checkpoint::load(ckpt_path(cfg, "diff_image")),
                                Checkpoint::load(ckpt_path(cfg, "controlnet")));
}

void stage_generate(const ExperimentConfig& cfg) {
    duo::DuoModels models = load_duo_models(cfg);
    duo::SynthesizeSettings settings;
    settings.count = cfg.tree.get_int("generate.count", 8);
    settings.base_seed = static_cast<uint64_t>(cfg.tree.get_int("generate.base_seed", 9000));
    std::string variance = cfg.tree.get_string("generate.variance", "posterior");
    require(variance == "posterior" || variance == "beta", Error::Kind::config,
            "generate.variance must be posterior or beta");
    settings.variance = variance == "posterior" ? diffusion::VarianceKind::posterior
                                                : diffusion::VarianceKind::beta;
    if (cfg.tree.get_bool("generate.rerender_real", false)) {
        DatasetManifest manifest = load_real_manifest(cfg);
        for (const auto& s : load_split_samples(manifest, Split::train, cfg.run_dir()))
            settings.rerender_labels.push_back(s.label);
    }
    duo::synthesize_dataset(models, settings, cfg.run_dir());
}

segmentation::SegTrainSettings seg_settings_from(const ExperimentConfig& cfg, uint64_t tag) {
    segmentation::SegTrainSettings s;
    s.max_epochs = cfg.tree.get_int("seg.max_epochs", 50);
    s.patience = static_cast<int>(cfg.tree.get_int("seg.patience", 10));
    s.learning_rate = cfg.tree.get_double("seg.lr", 1e-3);
    require(s.learning_rate >= 0, Error::Kind::config, "seg.lr must be >= 0");
    s.weight_decay = cfg.tree.get_double("seg.weight_decay", 0.0);
    s.seed = derive_seed(cfg.seed, {kTagSeg, tag});
    std::string mix = cfg.tree.get_string("seg.loss_mix", "dice_ce");
    s.loss_mix = mix == "dice_only"  ? segmentation::LossMix::dice_only
                 : mix == "ce_only"  ? segmentation::LossMix::ce_only
                                     : segmentation::LossMix::dice_ce;
    s.stop_at_val_dice = cfg.tree.get_double("seg.stop_at_val_dice", 0.0);
    return s;
}

std::vector<std::string> seg_variants_from(const ExperimentConfig& cfg) {
    return cfg.tree.get_string_list("seg.variants", {"unet"});
}

std::vector<segmentation::SegTask> seg_tasks_from(const ExperimentConfig& cfg) {
    std::vector<segmentation::SegTask> tasks;
    for (const auto& t : cfg.tree.get_string_list("seg.tasks", {"liver_only", "multi_class"})) {
        if (t == "liver_only") tasks.push_back(segmentation::SegTask::liver_only);
        else if (t == "multi_class") tasks.push_back(segmentation::SegTask::multi_class);
        else raise(Error::Kind::config, "seg.tasks: unknown task " + t);
    }
    return tasks;
}

void train_one_segmenter(const ExperimentConfig& cfg, const std::string& variant_name,
                         segmentation::SegTask task, const std::string& data_condition,
                         const std::vector<segmentation::SegSample>& train_raw,
                         const std::vector<segmentation::SegSample>& val_raw,
                         uint64_t seed_tag) {
    auto train = segmentation::prepare_task_samples(train_raw, task);
    auto val = segmentation::prepare_task_samples(val_raw, task);

    segmentation::SegmenterConfig scfg;
    scfg.variant = segmentation::seg_variant_from_string(variant_name);
    scfg.num_classes = task == segmentation::SegTask::liver_only ? 2 : 5;
    scfg.base_width = cfg.tree.get_int("seg.base_width", 16);
    scfg.num_levels = cfg.tree.get_int("seg.num_levels", 3);

    const auto& shape = train.front().volume.shape;
    segmentation::Segmenter model(scfg, shape, derive_seed(cfg.seed, {kTagSeg, seed_tag}));
    auto result = segmentation::train_segmenter(model, train, val, seg_settings_from(cfg, seed_tag));

    std::string name = "seg_" + variant_name + "_" + to_string(task) + "_" + data_condition;
    segmentation::make_segmenter_checkpoint(model, result, to_string(task), data_condition)
        .save(ckpt_path(cfg, name));
}

std::vector<segmentation::SegSample> synthetic_training_samples(const ExperimentConfig& cfg,
                                                                size_t real_count) {
    fs::path synth_path = cfg.run_dir() / "manifest_synth.json";
    need_artifact(synth_path, "synthetic manifest (generate stage)");
    DatasetManifest synth = DatasetManifest::load(synth_path);
    synth.validate(cfg.run_dir());

    bool include_degenerate = cfg.tree.get_bool("seg.include_degenerate", false);
    double ratio = cfg.tree.get_double("seg.synthetic_ratio", 1.0);
    size_t wanted = static_cast<size_t>(ratio * static_cast<double>(real_count) + 0.5);

    std::vector<segmentation::SegSample> out;
    for (const auto& rec : synth.records) {
        if (out.size() >= wanted) break;
        auto flag = rec.flags.find("degenerate_label");
        if (!include_degenerate && flag != rec.flags.end() && flag->second) continue;
        segmentation::SegSample s;
        s.volume = read_volume(cfg.run_dir() / rec.volume_path);
        s.label = read_label(cfg.run_dir() / rec.label_path);
        out.push_back(std::move(s));
    }
    return out;
}

void stage_segmentation(const ExperimentConfig& cfg, bool mixed) {
    DatasetManifest manifest = load_real_manifest(cfg);
    auto train = load_split_samples(manifest, Split::train, cfg.run_dir());
    auto val = load_split_samples(manifest, Split::val, cfg.run_dir());
    require(!train.empty(), Error::Kind::validation, "segmentation: empty train split");
    require(!val.empty(), Error::Kind::validation, "segmentation: empty validation split");

    if (mixed) {
        auto synth = synthetic_training_samples(cfg, train.size());
        for (auto& s : synth) train.push_back(std::move(s));
    }

    fs::create_directories(cfg.run_dir() / "ckpt");
    uint64_t tag = mixed ? 2000 : 1000;
    for (const auto& variant : seg_variants_from(cfg))
        for (auto task : seg_tasks_from(cfg)) {
            train_one_segmenter(cfg, variant, task, mixed ? "mixed" : "real", train, val,
                                tag++);
        }
}

void stage_report(const ExperimentConfig& cfg) {
    std::string json = build_report(cfg);
    std::ofstream out(cfg.run_dir() / "report.json", std::ios::trunc);
    require(out.good(), Error::Kind::io, "report: cannot write report.json");
    out << json;
}

}  // namespace

duo::DuoModels load_run_models(const ExperimentConfig& config) {
    return load_duo_models(config);
}

std::vector<segmentation::SegSample> load_split_samples(const DatasetManifest& manifest,
                                                        Split split,
                                                        const fs::path& base_dir) {
    std::vector<segmentation::SegSample> out;
    for (const auto* rec : manifest.split_records(split)) {
        segmentation::SegSample s;
        s.volume = read_volume(base_dir / rec->volume_path);
        s.label = read_label(base_dir / rec->label_path);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<StageOutcome> run_pipeline(const ExperimentConfig& config,
                                       const std::vector<Stage>& stages) {
    fs::create_directories(config.run_dir());
    config.tree.save(config.run_dir() / "config_snapshot.cfg");

    std::vector<StageOutcome> outcomes;
    for (Stage stage : all_stages()) {
        bool requested = false;
        for (Stage s : stages)
            if (s == stage) requested = true;
        if (!requested) continue;

        StageOutcome outcome{stage, false};
        if (stage_complete(config, stage)) {
            outcome.skipped = true;
            outcomes.push_back(outcome);
            continue;
        }
        switch (stage) {
            case Stage::phantom: stage_phantom(config); break;
            case Stage::vae_label: stage_vae(config, true); break;
            case Stage::vae_image: stage_vae(config, false); break;
            case Stage::diff_label: stage_diffusion(config, true); break;
            case Stage::diff_image: stage_diffusion(config, false); break;
            case Stage::controlnet: stage_controlnet(config); break;
            case Stage::generate: stage_generate(config); break;
            case Stage::seg_real: stage_segmentation(config, false); break;
            case Stage::seg_mixed: stage_segmentation(config, true); break;
            case Stage::report: stage_report(config); break;
        }
        mark_complete(config, stage);
        outcomes.push_back(outcome);
    }
    return outcomes;
}

std::vector<StageOutcome> run_pipeline(const ExperimentConfig& config) {
    return run_pipeline(config, all_stages());
}

std::string build_report(const ExperimentConfig& cfg) {
    DatasetManifest manifest = load_real_manifest(cfg);
    auto test_samples = load_split_samples(manifest, Split::test, cfg.run_dir());
    require(test_samples.size() >= 2, Error::Kind::validation,
            "report: need at least 2 test volumes for FID");

    fs::path synth_path = cfg.run_dir() / "manifest_synth.json";
    need_artifact(synth_path, "synthetic manifest (generate stage)");
    DatasetManifest synth = DatasetManifest::load(synth_path);
    synth.validate(cfg.run_dir());
    std::vector<core::Volume> synth_volumes;
    for (const auto& rec : synth.records)
        synth_volumes.push_back(read_volume(cfg.run_dir() / rec.volume_path));
    require(synth_volumes.size() >= 2, Error::Kind::validation,
            "report: need at least 2 synthetic volumes for FID");

    std::vector<core::Volume> real_volumes;
    for (const auto& s : test_samples) real_volumes.push_back(s.volume);

    metrics::FeatureExtractorSpec spec;
    spec.seed = static_cast<uint64_t>(cfg.tree.get_int("fid.seed", 7));
    spec.output_dim = cfg.tree.get_int("fid.output_dim", 64);
    auto slice = cfg.tree.get_int_list("fid.slice", {24, 24});
    require(slice.size() == 2, Error::Kind::config, "fid.slice must have 2 entries");
    spec.input_slice_size = {slice[0], slice[1]};
    metrics::FidReport fid = metrics::fid_report(real_volumes, synth_volumes, spec);

    nlohmann::json seg_rows = nlohmann::json::array();
    for (const auto& variant : seg_variants_from(cfg))
        for (auto task : seg_tasks_from(cfg)) {
            auto eval_dice = [&](const std::string& condition) {
                std::string name =
                    "seg_" + variant + "_" + to_string(task) + "_" + condition;
                need_artifact(ckpt_path(cfg, name), name + " checkpoint");
                Checkpoint ckpt = Checkpoint::load(ckpt_path(cfg, name));
                segmentation::SegmenterConfig scfg =
                    segmentation::SegmenterConfig::from_json(ckpt.config_json);
                auto eval_set = segmentation::prepare_task_samples(test_samples, task);
                segmentation::Segmenter model(scfg, eval_set.front().volume.shape, 0);
                model.load_blobs(ckpt);
                return segmentation::evaluate_mean_dice(model, eval_set);
            };
            double real_dice = eval_dice("real");
            double mixed_dice = eval_dice("mixed");
            nlohmann::json row;
            row["variant"] = variant;
            row["task"] = to_string(task);
            row["real_dice"] = real_dice;
            row["mixed_dice"] = mixed_dice;
            row["improvement_points"] = (mixed_dice - real_dice) * 100.0;
            row["improvement"] = format_improvement(real_dice, mixed_dice);
            seg_rows.push_back(row);
        }

    nlohmann::json report;
    report["schema_version"] = 1;
    report["fid"] = {{"axial", fid.axial},
                     {"sagittal", fid.sagittal},
                     {"coronal", fid.coronal},
                     {"average", fid.average}};
    report["segmentation"] = seg_rows;
    nlohmann::json meta;
    meta["dice_reduction"] = "foreground_mean";
    meta["mixing"] = {{"synthetic_ratio", cfg.tree.get_double("seg.synthetic_ratio", 1.0)},
                      {"sampling", "uniform"},
                      {"include_degenerate", cfg.tree.get_bool("seg.include_degenerate", false)}};
    meta["counts"] = {{"real_train", manifest.count(Split::train)},
                      {"real_val", manifest.count(Split::val)},
                      {"real_test", manifest.count(Split::test)},
                      {"synthetic", synth.records.size()}};
    report["metadata"] = meta;

    std::string json = report.dump(2) + "\n";
    validate_report_json(json);

    // Human-readable companion table.
    std::ofstream txt(cfg.run_dir() / "report.txt", std::ios::trunc);
    require(txt.good(), Error::Kind::io, "report: cannot write report.txt");
    char line[256];
    txt << "Generative quality (Frechet distance over slice features, lower is better)\n";
    std::snprintf(line, sizeof(line), "  axial %.4f | sagittal %.4f | coronal %.4f | avg %.4f\n\n",
                  fid.axial, fid.sagittal, fid.coronal, fid.average);
    txt << line;
    txt << "Segmentation (test-split foreground-mean Dice)\n";
    std::snprintf(line, sizeof(line), "  %-14s %-12s %8s %10s %12s\n", "model", "task", "real",
                  "real+synth", "improvement");
    txt << line;
    for (const auto& row : seg_rows) {
        std::snprintf(line, sizeof(line), "  %-14s %-12s %8.4f %10.4f %12s\n",
                      row["variant"].get<std::string>().c_str(),
                      row["task"].get<std::string>().c_str(), row["real_dice"].get<double>(),
                      row["mixed_dice"].get<double>(),
                      row["improvement"].get<std::string>().c_str());
        txt << line;
    }
    return json;
}

}  // namespace voxsyn::orch
