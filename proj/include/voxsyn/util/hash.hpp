// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstddef>
#include <string>

namespace voxsyn {

/// Incremental FNV-1a 64-bit hash. Content hashes for checkpoints, stage
/// completion markers and lineage records all go through this.
class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001B3ull;
        }
    }
    void update(const std::string& s) { update(s.data(), s.size()); }
    uint64_t digest() const { return h_; }

    std::string hex() const {
        static const char* k = "0123456789abcdef";
        std::string out(16, '0');
        uint64_t v = h_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<size_t>(i)] = k[v & 0xF];
            v >>= 4;
        }
        return out;
    }

private:
    uint64_t h_ = 0xCBF29CE484222325ull;
};

inline std::string hash_hex(const std::string& s) {
    Fnv1a h;
    h.update(s);
    return h.hex();
}

}  // namespace voxsyn
