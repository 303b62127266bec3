// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace voxsyn::orch {

enum class Provenance { phantom, synthetic };
enum class Split { train, val, test };

std::string to_string(Provenance p);
std::string to_string(Split s);
Provenance provenance_from_string(const std::string& s);
Split split_from_string(const std::string& s);

/// One paired (volume, label) record. Paths are relative to the manifest's
/// directory so run directories stay relocatable.
struct ManifestRecord {
    std::string id;
    std::string volume_path;
    std::string label_path;
    Provenance provenance = Provenance::phantom;
    Split split = Split::train;
    std::map<std::string, bool> flags;            // e.g. degenerate_label, has_tumor
    std::map<std::string, std::string> lineage;   // checkpoint content hashes
};

struct DatasetManifest {
    int format_version = 1;
    std::vector<ManifestRecord> records;

    std::vector<const ManifestRecord*> split_records(Split s) const;
    size_t count(Split s) const;
    size_t count(Provenance p) const;

    /// Unique ids, files present on disk, declared split totals consistent.
    void validate(const std::filesystem::path& base_dir) const;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);

    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

/// Concatenates two manifests; ids must stay unique.
DatasetManifest merge_manifests(const DatasetManifest& a, const DatasetManifest& b);

}  // namespace voxsyn::orch
