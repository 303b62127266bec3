// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/orch/report.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "voxsyn/util/error.hpp"

namespace voxsyn::orch {

std::string format_improvement(double real_dice, double mixed_dice) {
    double pct = (mixed_dice - real_dice) * 100.0;
    if (std::abs(pct) < 0.005) pct = 0.0;  // avoid "-0.00%"
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%+.2f%%", pct);
    return buf;
}

void validate_report_json(const std::string& report_json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(report_json);
    } catch (const nlohmann::json::exception& e) {
        raise(Error::Kind::validation, std::string("report: malformed JSON: ") + e.what());
    }
    auto need = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        require(obj.contains(key), Error::Kind::validation,
                std::string("report: missing field ") + key);
        return obj.at(key);
    };

    require(need(j, "schema_version").is_number_integer(), Error::Kind::validation,
            "report: schema_version must be an integer");

    const auto& fid = need(j, "fid");
    for (const char* axis : {"axial", "sagittal", "coronal", "average"})
        require(need(fid, axis).is_number(), Error::Kind::validation,
                std::string("report: fid.") + axis + " must be a number");

    const auto& seg = need(j, "segmentation");
    require(seg.is_array(), Error::Kind::validation, "report: segmentation must be an array");
    for (const auto& row : seg) {
        require(need(row, "variant").is_string(), Error::Kind::validation,
                "report: segmentation row variant must be a string");
        require(need(row, "task").is_string(), Error::Kind::validation,
                "report: segmentation row task must be a string");
        for (const char* key : {"real_dice", "mixed_dice", "improvement_points"})
            require(need(row, key).is_number(), Error::Kind::validation,
                    std::string("report: segmentation row ") + key + " must be a number");
        require(need(row, "improvement").is_string(), Error::Kind::validation,
                "report: segmentation row improvement must be a string");
    }

    const auto& meta = need(j, "metadata");
    require(need(meta, "dice_reduction").is_string(), Error::Kind::validation,
            "report: metadata.dice_reduction must be a string");
    require(need(meta, "mixing").is_object(), Error::Kind::validation,
            "report: metadata.mixing must be an object");
}

}  // namespace voxsyn::orch
