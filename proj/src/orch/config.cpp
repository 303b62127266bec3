// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/config.hpp"

#include <fstream>
#include <sstream>

#include "voxsyn/util/error.hpp"

namespace voxsyn::orch {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

}  // namespace

ConfigTree ConfigTree::parse(const std::string& text) {
    ConfigTree cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        require(eq != std::string::npos, Error::Kind::config,
                "config: missing '=' on line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        require(!key.empty(), Error::Kind::config,
                "config: empty key on line " + std::to_string(lineno));
        cfg.values_[key] = value;
    }
    return cfg;
}

ConfigTree ConfigTree::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), Error::Kind::io, "config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
}

std::string ConfigTree::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string ConfigTree::require_string(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), Error::Kind::config, "config: missing key " + key);
    return it->second;
}

int64_t ConfigTree::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (...) {
        raise(Error::Kind::config, "config: key " + key + " is not an integer");
    }
}

double ConfigTree::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        raise(Error::Kind::config, "config: key " + key + " is not a number");
    }
}

bool ConfigTree::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    raise(Error::Kind::config, "config: key " + key + " is not a boolean");
}

std::vector<int64_t> ConfigTree::get_int_list(const std::string& key,
                                              std::vector<int64_t> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int64_t> out;
    for (const auto& s : split_commas(it->second)) {
        try {
            out.push_back(std::stoll(s));
        } catch (...) {
            raise(Error::Kind::config, "config: key " + key + " has a non-integer item");
        }
    }
    return out;
}

std::vector<double> ConfigTree::get_double_list(const std::string& key,
                                                std::vector<double> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& s : split_commas(it->second)) {
        try {
            out.push_back(std::stod(s));
        } catch (...) {
            raise(Error::Kind::config, "config: key " + key + " has a non-numeric item");
        }
    }
    return out;
}

std::vector<std::string> ConfigTree::get_string_list(
    const std::string& key, std::vector<std::string> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return split_commas(it->second);
}

std::string ConfigTree::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

void ConfigTree::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), Error::Kind::io, "config: cannot open " + path.string());
    out << canonical();
    require(out.good(), Error::Kind::io, "config: write failed for " + path.string());
}

}  // namespace voxsyn::orch
