// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace voxsyn::orch {

/// Improvement in percentage points, formatted with an explicit sign and two
/// decimals ("+0.12%", "-0.08%", "+0.00%").
std::string format_improvement(double real_dice, double mixed_dice);

/// Validates a report document against the published schema (see README);
/// throws a validation error naming the first offending field.
void validate_report_json(const std::string& report_json);

}  // namespace voxsyn::orch
