// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <functional>

#include "test_support.hpp"
#include "voxsyn/orch/checkpoint.hpp"
#include "voxsyn/orch/config.hpp"
#include "voxsyn/orch/fvol.hpp"
#include "voxsyn/orch/manifest.hpp"
#include "voxsyn/orch/pipeline.hpp"
#include "voxsyn/orch/report.hpp"

using namespace voxsyn;
using orch::Checkpoint;
using orch::ConfigTree;
using orch::DatasetManifest;
using orch::FvolField;
using orch::ManifestRecord;

namespace {

std::vector<char> read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
}

void write_all(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Error::Kind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return Error::Kind::io;
}

}  // namespace

TEST_CASE("fvol f32 round trip is bit-exact") {
    test::TempDir dir("fvol_f32");
    FvolField f;
    f.shape = {3, 4, 5};
    f.dtype = "f32";
    f.spacing = {1.0, 1.5, 2.0};
    Rng rng(1);
    for (int i = 0; i < 60; ++i) f.f32.push_back(static_cast<float>(rng.normal()));
    orch::write_fvol(dir.path / "a.fvol", f);
    FvolField back = orch::read_fvol(dir.path / "a.fvol");
    CHECK(back.shape == f.shape);
    CHECK(back.dtype == "f32");
    CHECK(back.spacing == f.spacing);
    CHECK(back.f32 == f.f32);
}

TEST_CASE("fvol u8 round trip is bit-exact, including rank-4 shapes") {
    test::TempDir dir("fvol_u8");
    FvolField f;
    f.shape = {2, 2, 3, 3};
    f.dtype = "u8";
    Rng rng(2);
    for (int i = 0; i < 36; ++i) f.u8.push_back(static_cast<uint8_t>(rng.uniform_int(0, 255)));
    orch::write_fvol(dir.path / "b.fvol", f);
    FvolField back = orch::read_fvol(dir.path / "b.fvol");
    CHECK(back.shape == f.shape);
    CHECK(back.u8 == f.u8);
}

TEST_CASE("fvol file layout: size = 6 + 4 + header + payload") {
    test::TempDir dir("fvol_size");
    FvolField f;
    f.shape = {2, 2, 2};
    f.dtype = "u8";
    f.u8.assign(8, 0);
    orch::write_fvol(dir.path / "c.fvol", f);
    auto bytes = read_all(dir.path / "c.fvol");
    uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 6, 4);
    CHECK(bytes.size() == 6 + 4 + header_len + 8);
    CHECK(std::string(bytes.data(), 6) == "FVOL1\n");
}

TEST_CASE("fvol error paths: bad magic, truncation, bad dtype, trailing bytes") {
    test::TempDir dir("fvol_err");
    FvolField f;
    f.shape = {2, 2, 2};
    f.dtype = "f32";
    f.f32.assign(8, 0.5f);
    auto path = dir.path / "d.fvol";
    orch::write_fvol(path, f);
    auto good = read_all(path);

    auto corrupted = good;
    corrupted[0] = 'X';
    write_all(path, corrupted);
    CHECK(kind_of([&] { orch::read_fvol(path); }) == Error::Kind::format_magic);

    auto truncated = good;
    truncated.resize(truncated.size() - 5);
    write_all(path, truncated);
    CHECK(kind_of([&] { orch::read_fvol(path); }) == Error::Kind::format_payload);

    auto header_cut = good;
    header_cut.resize(8);
    write_all(path, header_cut);
    CHECK(kind_of([&] { orch::read_fvol(path); }) == Error::Kind::format_truncated);

    auto trailing = good;
    trailing.push_back('\0');
    write_all(path, trailing);
    CHECK(kind_of([&] { orch::read_fvol(path); }) == Error::Kind::format_payload);

    FvolField bad_dtype;
    bad_dtype.shape = {2, 2, 2};
    bad_dtype.dtype = "f64";
    CHECK(kind_of([&] { orch::write_fvol(dir.path / "e.fvol", bad_dtype); }) ==
          Error::Kind::format_dtype);

    std::string text(good.begin(), good.end());
    auto pos = text.find("f32");
    text.replace(pos, 3, "i16");
    write_all(path, std::vector<char>(text.begin(), text.end()));
    CHECK(kind_of([&] { orch::read_fvol(path); }) == Error::Kind::format_dtype);
}

TEST_CASE("volume adapter preserves values and metadata") {
    test::TempDir dir("fvol_vol");
    core::Volume v = core::Volume::zeros({4, 3, 2, 1});
    Rng rng(3);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform());  // f32-representable
    v.normalized = true;
    v.spacing = {0.5, 0.5, 2.5};
    orch::write_volume(dir.path / "v.fvol", v);
    core::Volume back = orch::read_volume(dir.path / "v.fvol");
    CHECK(back.shape == v.shape);
    CHECK(back.spacing == v.spacing);
    CHECK(back.normalized);
    CHECK(back.data == v.data);
}

TEST_CASE("manifest round trip, validation and merge counting") {
    test::TempDir dir("manifest");
    core::Volume v = core::Volume::zeros({2, 2, 2, 1});
    v.normalized = true;
    core::LabelMap l = core::LabelMap::zeros({2, 2, 2, 1});

    DatasetManifest real;
    for (int i = 0; i < 8; ++i) {
        ManifestRecord r;
        r.id = "real_" + std::to_string(i);
        r.volume_path = r.id + "_v.fvol";
        r.label_path = r.id + "_l.fvol";
        r.provenance = orch::Provenance::phantom;
        r.split = orch::Split::train;
        orch::write_volume(dir.path / r.volume_path, v);
        orch::write_label(dir.path / r.label_path, l);
        real.records.push_back(r);
    }
    DatasetManifest synth;
    for (int i = 0; i < 5; ++i) {
        ManifestRecord r;
        r.id = "synth_" + std::to_string(i);
        r.volume_path = real.records[0].volume_path;
        r.label_path = real.records[0].label_path;
        r.provenance = orch::Provenance::synthetic;
        r.split = orch::Split::train;
        synth.records.push_back(r);
    }

    DatasetManifest merged = orch::merge_manifests(real, synth);
    CHECK(merged.records.size() == 13);
    CHECK(merged.count(orch::Provenance::phantom) == 8);
    CHECK(merged.count(orch::Provenance::synthetic) == 5);

    merged.save(dir.path / "m.json");
    DatasetManifest loaded = DatasetManifest::load(dir.path / "m.json");
    CHECK(loaded.records.size() == 13);
    loaded.validate(dir.path);

    CHECK_THROWS_AS(orch::merge_manifests(real, real), Error);

    loaded.records[0].volume_path = "missing.fvol";
    CHECK_THROWS_AS(loaded.validate(dir.path), Error);

    std::string text = merged.to_json();
    auto pos = text.find("\"train\": 13");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 11, "\"train\": 12");
    CHECK_THROWS_AS(DatasetManifest::from_json(text), Error);
}

TEST_CASE("config tree parses values, lists and comments") {
    ConfigTree cfg = ConfigTree::parse(
        "# comment line\n"
        "run.name = desk  # trailing comment\n"
        "run.seed = 7\n"
        "phantom.splits = 8, 2, 2\n"
        "seg.lr = 1e-3\n"
        "seg.variants = unet, vnet\n"
        "generate.rerender_real = true\n");
    CHECK(cfg.get_string("run.name", "") == "desk");
    CHECK(cfg.get_int("run.seed", 0) == 7);
    CHECK(cfg.get_int_list("phantom.splits", {}) == std::vector<int64_t>{8, 2, 2});
    CHECK(cfg.get_double("seg.lr", 0) == doctest::Approx(1e-3));
    CHECK(cfg.get_string_list("seg.variants", {}) ==
          std::vector<std::string>{"unet", "vnet"});
    CHECK(cfg.get_bool("generate.rerender_real", false));
    CHECK(cfg.get_int("absent.key", 42) == 42);
    CHECK_THROWS_AS(ConfigTree::parse("novalue\n"), Error);
    CHECK_THROWS_AS(cfg.get_int("run.name", 0), Error);

    ConfigTree again = ConfigTree::parse(cfg.canonical());
    CHECK(again.canonical() == cfg.canonical());
}

TEST_CASE("checkpoint save/load round trip is bit-exact and hash-verified") {
    test::TempDir dir("ckpt");
    Checkpoint c;
    c.kind = "vae";
    c.config_json = "{\"base_width\":4}";
    c.history_json = "{\"loss\":[1.0,0.5]}";
    c.constants["latent_scale"] = 1.25;
    c.refs["vae"] = "deadbeef";
    Rng rng(5);
    c.blobs.emplace_back("enc.w", nn::Tensor::randn({3, 2, 2}, rng));
    c.blobs.emplace_back("enc.b", nn::Tensor::randn({3}, rng));

    c.save(dir.path / "c.vsck");
    Checkpoint back = Checkpoint::load(dir.path / "c.vsck");
    CHECK(back.kind == c.kind);
    CHECK(back.constants == c.constants);
    CHECK(back.refs == c.refs);
    CHECK(back.content_hash() == c.content_hash());
    REQUIRE(back.blobs.size() == 2);
    CHECK(test::tensors_equal(back.blob("enc.w"), c.blob("enc.w")));
    CHECK(test::tensors_equal(back.blob("enc.b"), c.blob("enc.b")));

    auto bytes = read_all(dir.path / "c.vsck");
    bytes[bytes.size() - 1] ^= 0x40;
    write_all(dir.path / "c.vsck", bytes);
    CHECK(kind_of([&] { Checkpoint::load(dir.path / "c.vsck"); }) == Error::Kind::lineage);
}

TEST_CASE("checkpoint hash covers weights and config") {
    Checkpoint c;
    c.kind = "vae";
    c.config_json = "{\"base_width\":4}";
    c.blobs.emplace_back("w", nn::Tensor::full({2}, 1.0));
    std::string h1 = c.content_hash();
    c.blobs[0].second[0] = 2.0;
    std::string h2 = c.content_hash();
    c.config_json = "{\"base_width\":8}";
    std::string h3 = c.content_hash();
    CHECK(h1 != h2);
    CHECK(h2 != h3);
}

TEST_CASE("improvement formatting follows the signed percent convention") {
    CHECK(orch::format_improvement(0.9650, 0.9662) == "+0.12%");
    CHECK(orch::format_improvement(0.9657, 0.9649) == "-0.08%");
    CHECK(orch::format_improvement(0.5, 0.5) == "+0.00%");
    CHECK(orch::format_improvement(0.6968, 0.7014) == "+0.46%");
}

TEST_CASE("report schema validation catches missing fields") {
    std::string good = R"({
      "schema_version": 1,
      "fid": {"axial": 1.0, "sagittal": 2.0, "coronal": 3.0, "average": 2.0},
      "segmentation": [{"variant":"unet","task":"liver_only","real_dice":0.9,
                        "mixed_dice":0.91,"improvement_points":1.0,"improvement":"+1.00%"}],
      "metadata": {"dice_reduction":"foreground_mean","mixing":{}}
    })";
    orch::validate_report_json(good);

    std::string no_fid = R"({"schema_version":1,"segmentation":[],
                             "metadata":{"dice_reduction":"x","mixing":{}}})";
    CHECK_THROWS_AS(orch::validate_report_json(no_fid), Error);

    std::string bad_row = R"({
      "schema_version": 1,
      "fid": {"axial": 1.0, "sagittal": 2.0, "coronal": 3.0, "average": 2.0},
      "segmentation": [{"variant":"unet"}],
      "metadata": {"dice_reduction":"x","mixing":{}}
    })";
    CHECK_THROWS_AS(orch::validate_report_json(bad_row), Error);
}

namespace {

orch::ExperimentConfig tiny_run_config(const std::filesystem::path& root,
                                       const std::string& name) {
    orch::ConfigTree tree = orch::ConfigTree::parse(
        "run.seed = 3\n"
        "phantom.count = 4\n"
        "phantom.splits = 2,1,1\n"
        "phantom.base_seed = 50\n"
        "phantom.roi = 16,16,8\n"
        "phantom.liver_axes = 4,6,4,6,2,3\n"
        "phantom.tumor_radius = 1.2,1.8\n");
    tree.set("run.name", name);
    tree.set("run.out_root", root.string());
    return orch::ExperimentConfig::from_tree(std::move(tree));
}

}  // namespace

TEST_CASE("pipeline stages skip on rerun and reactivate when the config changes") {
    test::TempDir dir("pipeline_skip");
    orch::ExperimentConfig cfg = tiny_run_config(dir.path, "skiprun");
    auto first = orch::run_pipeline(cfg, {orch::Stage::phantom});
    REQUIRE(first.size() == 1);
    CHECK_FALSE(first[0].skipped);

    auto second = orch::run_pipeline(cfg, {orch::Stage::phantom});
    REQUIRE(second.size() == 1);
    CHECK(second[0].skipped);

    orch::ConfigTree changed = cfg.tree;
    changed.set("phantom.base_seed", "51");
    orch::ExperimentConfig cfg2 = orch::ExperimentConfig::from_tree(changed);
    auto third = orch::run_pipeline(cfg2, {orch::Stage::phantom});
    REQUIRE(third.size() == 1);
    CHECK_FALSE(third[0].skipped);
}

TEST_CASE("requesting seg_mixed without the generate stage is a dependency error") {
    test::TempDir dir("pipeline_dep");
    orch::ExperimentConfig cfg = tiny_run_config(dir.path, "deprun");
    orch::run_pipeline(cfg, {orch::Stage::phantom});
    CHECK(kind_of([&] { orch::run_pipeline(cfg, {orch::Stage::seg_mixed}); }) ==
          Error::Kind::dependency);
}

TEST_CASE("training stages report a missing checkpoint by name") {
    test::TempDir dir("pipeline_dep2");
    orch::ExperimentConfig cfg = tiny_run_config(dir.path, "deprun2");
    orch::run_pipeline(cfg, {orch::Stage::phantom});
    try {
        orch::run_pipeline(cfg, {orch::Stage::diff_label});
        FAIL("expected a dependency error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::dependency);
        CHECK(std::string(e.what()).find("vae_label") != std::string::npos);
    }
}
