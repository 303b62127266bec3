// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/fvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace voxsyn::orch {

static_assert(std::endian::native == std::endian::little,
              "FVOL writer assumes a little-endian host");

namespace {

constexpr char kMagic[6] = {'F', 'V', 'O', 'L', '1', '\n'};

int64_t shape_count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

}  // namespace

void write_fvol(const std::filesystem::path& path, const FvolField& field) {
    require(field.shape.size() == 3 || field.shape.size() == 4, Error::Kind::shape,
            "write_fvol: shape must be [D,H,W] or [C,D,H,W]");
    const int64_t count = shape_count(field.shape);

    nlohmann::json header;
    header["shape"] = field.shape;
    header["dtype"] = field.dtype;
    header["spacing"] = field.spacing;
    header["extra"] = nlohmann::json::parse(field.extra_json);

    const void* payload = nullptr;
    size_t payload_bytes = 0;
    if (field.dtype == "f32") {
        require(static_cast<int64_t>(field.f32.size()) == count, Error::Kind::shape,
                "write_fvol: f32 payload size does not match shape");
        for (float x : field.f32)
            require(std::isfinite(x), Error::Kind::validation,
                    "write_fvol: non-finite payload value");
        payload = field.f32.data();
        payload_bytes = field.f32.size() * sizeof(float);
    } else if (field.dtype == "u8") {
        require(static_cast<int64_t>(field.u8.size()) == count, Error::Kind::shape,
                "write_fvol: u8 payload size does not match shape");
        payload = field.u8.data();
        payload_bytes = field.u8.size();
    } else {
        raise(Error::Kind::format_dtype, "write_fvol: unsupported dtype " + field.dtype);
    }

    std::string header_str = header.dump();
    uint32_t header_len = static_cast<uint32_t>(header_str.size());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Error::Kind::io, "write_fvol: cannot open " + path.string());
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    out.flush();
    require(out.good(), Error::Kind::io, "write_fvol: write failed for " + path.string());
}

FvolField read_fvol(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Error::Kind::io, "read_fvol: cannot open " + path.string());

    char magic[6];
    in.read(magic, sizeof(magic));
    require(in.gcount() == sizeof(magic), Error::Kind::format_truncated,
            "read_fvol: file shorter than magic");
    require(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, Error::Kind::format_magic,
            "read_fvol: bad magic bytes in " + path.string());

    uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require(in.gcount() == sizeof(header_len), Error::Kind::format_truncated,
            "read_fvol: truncated header length");

    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    require(in.gcount() == static_cast<std::streamsize>(header_len),
            Error::Kind::format_truncated, "read_fvol: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Kind::format_payload,
              std::string("read_fvol: malformed header JSON: ") + e.what());
    }

    FvolField field;
    field.shape = header.at("shape").get<std::vector<int64_t>>();
    field.dtype = header.at("dtype").get<std::string>();
    auto sp = header.at("spacing").get<std::vector<double>>();
    require(sp.size() == 3, Error::Kind::format_payload, "read_fvol: spacing must be length 3");
    field.spacing = {sp[0], sp[1], sp[2]};
    field.extra_json = header.value("extra", nlohmann::json::object()).dump();
    require(field.shape.size() == 3 || field.shape.size() == 4, Error::Kind::format_payload,
            "read_fvol: shape rank must be 3 or 4");

    const int64_t count = shape_count(field.shape);
    size_t elem_size;
    if (field.dtype == "f32") {
        elem_size = sizeof(float);
    } else if (field.dtype == "u8") {
        elem_size = 1;
    } else {
        raise(Error::Kind::format_dtype, "read_fvol: unsupported dtype " + field.dtype);
    }

    std::vector<char> payload(static_cast<size_t>(count) * elem_size);
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    require(in.gcount() == static_cast<std::streamsize>(payload.size()),
            Error::Kind::format_payload,
            "read_fvol: payload size mismatch in " + path.string());
    // Any trailing bytes also violate the payload contract.
    char probe;
    in.read(&probe, 1);
    require(in.gcount() == 0, Error::Kind::format_payload,
            "read_fvol: trailing bytes after payload in " + path.string());

    if (field.dtype == "f32") {
        field.f32.resize(static_cast<size_t>(count));
        std::memcpy(field.f32.data(), payload.data(), payload.size());
    } else {
        field.u8.assign(payload.begin(), payload.end());
    }
    return field;
}

void write_volume(const std::filesystem::path& path, const core::Volume& v) {
    v.validate();
    FvolField f;
    f.shape = {v.shape.depth, v.shape.height, v.shape.width};
    f.dtype = "f32";
    f.spacing = v.spacing;
    nlohmann::json extra;
    extra["normalized"] = v.normalized;
    f.extra_json = extra.dump();
    f.f32.resize(v.data.size());
    for (size_t i = 0; i < v.data.size(); ++i) f.f32[i] = static_cast<float>(v.data[i]);
    write_fvol(path, f);
}

core::Volume read_volume(const std::filesystem::path& path) {
    FvolField f = read_fvol(path);
    require(f.dtype == "f32", Error::Kind::format_dtype,
            "read_volume: expected f32 payload in " + path.string());
    require(f.shape.size() == 3, Error::Kind::format_payload,
            "read_volume: expected rank-3 shape in " + path.string());
    core::Volume v;
    v.shape = core::VolumeShape{f.shape[1], f.shape[2], f.shape[0], 1};
    v.spacing = f.spacing;
    auto extra = nlohmann::json::parse(f.extra_json);
    v.normalized = extra.value("normalized", false);
    v.data.resize(f.f32.size());
    for (size_t i = 0; i < f.f32.size(); ++i) v.data[i] = static_cast<double>(f.f32[i]);
    v.validate();
    return v;
}

void write_label(const std::filesystem::path& path, const core::LabelMap& l) {
    l.validate();
    FvolField f;
    f.shape = {l.shape.depth, l.shape.height, l.shape.width};
    f.dtype = "u8";
    nlohmann::json extra;
    extra["num_classes"] = l.num_classes;
    f.extra_json = extra.dump();
    f.u8 = l.data;
    write_fvol(path, f);
}

core::LabelMap read_label(const std::filesystem::path& path) {
    FvolField f = read_fvol(path);
    require(f.dtype == "u8", Error::Kind::format_dtype,
            "read_label: expected u8 payload in " + path.string());
    require(f.shape.size() == 3, Error::Kind::format_payload,
            "read_label: expected rank-3 shape in " + path.string());
    core::LabelMap l;
    l.shape = core::VolumeShape{f.shape[1], f.shape[2], f.shape[0], 1};
    auto extra = nlohmann::json::parse(f.extra_json);
    l.num_classes = extra.value("num_classes", 5);
    l.data = f.u8;
    l.validate();
    return l;
}

}  // namespace voxsyn::orch
