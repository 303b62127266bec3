// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace voxsyn::orch {

/// Plain-text key/value tree: one `dotted.key = value` per line, `#` starts a
/// comment. Values are strings; typed getters parse on demand. Keys read or
/// written are tracked nowhere — canonical() emits the sorted tree, which is
/// what gets hashed and snapshotted.
class ConfigTree {
public:
    ConfigTree() = default;

    static ConfigTree parse(const std::string& text);
    static ConfigTree load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int64_t> get_int_list(const std::string& key,
                                      std::vector<int64_t> fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        std::vector<double> fallback) const;
    std::vector<std::string> get_string_list(const std::string& key,
                                             std::vector<std::string> fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Deterministic serialization: keys sorted, one per line.
    std::string canonical() const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace voxsyn::orch
