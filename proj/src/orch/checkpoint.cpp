// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "voxsyn/util/error.hpp"
#include "voxsyn/util/hash.hpp"

namespace voxsyn::orch {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {
constexpr char kMagic[6] = {'V', 'S', 'C', 'K', '1', '\n'};
}

std::string Checkpoint::content_hash() const {
    Fnv1a h;
    h.update(kind);
    h.update(config_json);
    h.update(history_json);
    for (const auto& [k, v] : refs) {
        h.update(k);
        h.update(v);
    }
    for (const auto& [k, v] : constants) {
        h.update(k);
        h.update(&v, sizeof(v));
    }
    for (const auto& [name, tensor] : blobs) {
        h.update(name);
        h.update(tensor.data(), static_cast<size_t>(tensor.size()) * sizeof(nn::Scalar));
    }
    return h.hex();
}

const nn::Tensor& Checkpoint::blob(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return t;
    raise(Error::Kind::dependency, "checkpoint: missing blob " + name);
}

bool Checkpoint::has_blob(const std::string& name) const {
    for (const auto& [n, t] : blobs)
        if (n == name) return true;
    return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["kind"] = kind;
    header["config"] = nlohmann::json::parse(config_json);
    header["history"] = nlohmann::json::parse(history_json);
    header["refs"] = refs;
    header["constants"] = constants;
    header["content_hash"] = content_hash();

    nlohmann::json blob_index = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& [name, tensor] : blobs) {
        nlohmann::json b;
        b["name"] = name;
        b["shape"] = tensor.shape();
        b["offset"] = offset;
        b["count"] = tensor.size();
        blob_index.push_back(b);
        offset += tensor.size();
    }
    header["blobs"] = blob_index;

    std::string header_str = header.dump();
    uint32_t header_len = static_cast<uint32_t>(header_str.size());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Kind::io, "checkpoint: cannot open " + path.string());
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : blobs)
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(tensor.size() * sizeof(nn::Scalar)));
    out.flush();
    require(out.good(), Error::Kind::io, "checkpoint: write failed for " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Kind::io, "checkpoint: cannot open " + path.string());

    char magic[6];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
            Error::Kind::format_magic, "checkpoint: bad magic in " + path.string());

    uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require(in.gcount() == sizeof(header_len), Error::Kind::format_truncated,
            "checkpoint: truncated header length");
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    require(in.gcount() == static_cast<std::streamsize>(header_len),
            Error::Kind::format_truncated, "checkpoint: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Kind::format_payload,
              std::string("checkpoint: malformed header: ") + e.what());
    }

    Checkpoint c;
    c.kind = header.at("kind").get<std::string>();
    c.config_json = header.at("config").dump();
    c.history_json = header.at("history").dump();
    c.refs = header.value("refs", std::map<std::string, std::string>{});
    c.constants = header.value("constants", std::map<std::string, double>{});

    for (const auto& b : header.at("blobs")) {
        std::string name = b.at("name").get<std::string>();
        auto shape = b.at("shape").get<nn::ShapeVec>();
        int64_t count = b.at("count").get<int64_t>();
        nn::Tensor t(shape);
        require(t.size() == count, Error::Kind::format_payload,
                "checkpoint: blob shape/count mismatch for " + name);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(count * sizeof(nn::Scalar)));
        require(in.gcount() == static_cast<std::streamsize>(count * sizeof(nn::Scalar)),
                Error::Kind::format_payload,
                "checkpoint: payload size mismatch for blob " + name);
        c.blobs.emplace_back(std::move(name), std::move(t));
    }

    std::string stored = header.at("content_hash").get<std::string>();
    require(stored == c.content_hash(), Error::Kind::lineage,
            "checkpoint: content hash mismatch in " + path.string());
    return c;
}

}  // namespace voxsyn::orch
