// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace voxsyn {

/// Typed error used across the project. The kind lets callers (and tests)
/// distinguish validation failures from I/O, format, and dependency problems.
class Error : public std::runtime_error {
public:
    enum class Kind {
        validation,        // bad input values (non-finite data, out-of-range labels, ...)
        shape,             // tensor/volume shape mismatch
        config,            // malformed or inconsistent configuration
        io,                // filesystem failures
        dependency,        // missing checkpoint / stage prerequisite
        numeric,           // non-finite loss, failed matrix decomposition
        lineage,           // checkpoint hash mismatch
        format_magic,      // FVOL/VSCK bad magic bytes
        format_truncated,  // file shorter than header promises
        format_payload,    // payload size disagrees with declared shape/dtype
        format_dtype,      // unsupported dtype string
    };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

[[noreturn]] inline void raise(Error::Kind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, Error::Kind kind, const std::string& message) {
    if (!condition) raise(kind, message);
}

}  // namespace voxsyn
