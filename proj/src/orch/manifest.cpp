// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "voxsyn/util/error.hpp"

namespace voxsyn::orch {

std::string to_string(Provenance p) {
    return p == Provenance::phantom ? "phantom" : "synthetic";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "phantom") return Provenance::phantom;
    if (s == "synthetic") return Provenance::synthetic;
    raise(Error::Kind::validation, "unknown provenance: " + s);
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    raise(Error::Kind::validation, "unknown split: " + s);
}

std::vector<const ManifestRecord*> DatasetManifest::split_records(Split s) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
        if (r.split == s) out.push_back(&r);
    return out;
}

size_t DatasetManifest::count(Split s) const { return split_records(s).size(); }

size_t DatasetManifest::count(Provenance p) const {
    size_t n = 0;
    for (const auto& r : records)
        if (r.provenance == p) ++n;
    return n;
}

void DatasetManifest::validate(const std::filesystem::path& base_dir) const {
    std::set<std::string> ids;
    for (const auto& r : records) {
        require(ids.insert(r.id).second, Error::Kind::validation,
                "manifest: duplicate id " + r.id);
        for (const auto& p : {r.volume_path, r.label_path})
            require(std::filesystem::exists(base_dir / p), Error::Kind::validation,
                    "manifest: referenced file missing: " + (base_dir / p).string());
    }
}

std::string DatasetManifest::to_json() const {
    nlohmann::json j;
    j["format_version"] = format_version;
    nlohmann::json counts;
    counts["train"] = count(Split::train);
    counts["val"] = count(Split::val);
    counts["test"] = count(Split::test);
    j["split_counts"] = counts;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json rec;
        rec["id"] = r.id;
        rec["volume_path"] = r.volume_path;
        rec["label_path"] = r.label_path;
        rec["provenance"] = to_string(r.provenance);
        rec["split"] = to_string(r.split);
        rec["flags"] = r.flags;
        rec["lineage"] = r.lineage;
        recs.push_back(rec);
    }
    j["records"] = recs;
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Kind::format_payload,
              std::string("manifest: malformed JSON: ") + e.what());
    }
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    require(m.format_version == 1, Error::Kind::format_payload,
            "manifest: unsupported format_version");
    for (const auto& rec : j.at("records")) {
        ManifestRecord r;
        r.id = rec.at("id").get<std::string>();
        r.volume_path = rec.at("volume_path").get<std::string>();
        r.label_path = rec.at("label_path").get<std::string>();
        r.provenance = provenance_from_string(rec.at("provenance").get<std::string>());
        r.split = split_from_string(rec.at("split").get<std::string>());
        r.flags = rec.value("flags", std::map<std::string, bool>{});
        r.lineage = rec.value("lineage", std::map<std::string, std::string>{});
        m.records.push_back(std::move(r));
    }
    if (j.contains("split_counts")) {
        const auto& counts = j["split_counts"];
        require(counts.at("train").get<size_t>() == m.count(Split::train) &&
                    counts.at("val").get<size_t>() == m.count(Split::val) &&
                    counts.at("test").get<size_t>() == m.count(Split::test),
                Error::Kind::validation,
                "manifest: declared split counts disagree with records");
    }
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Kind::io, "manifest: cannot open " + path.string());
    std::string text = to_json();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(out.good(), Error::Kind::io, "manifest: write failed for " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Kind::io, "manifest: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

DatasetManifest merge_manifests(const DatasetManifest& a, const DatasetManifest& b) {
    DatasetManifest out = a;
    for (const auto& r : b.records) out.records.push_back(r);
    std::set<std::string> ids;
    for (const auto& r : out.records)
        require(ids.insert(r.id).second, Error::Kind::validation,
                "merge_manifests: duplicate id " + r.id);
    return out;
}

}  // namespace voxsyn::orch
