// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "voxsyn/nn/ops.hpp"

namespace voxsyn::nn {

/// Named parameter list; the order is the checkpoint blob order, so it must be
/// deterministic for a given architecture.
using NamedParams = std::vector<std::pair<std::string, Var>>;

struct ParamCollector {
    NamedParams items;
    std::string prefix;

    void add(const std::string& name, const Var& v) { items.emplace_back(prefix + name, v); }

    ParamCollector scoped(const std::string& sub) const {
        ParamCollector pc;
        pc.prefix = prefix + sub + ".";
        return pc;
    }
    void absorb(ParamCollector&& other) {
        for (auto& it : other.items) items.push_back(std::move(it));
    }
};

enum class Activation { relu, prelu, silu };

/// 3D convolution layer; kernel is cubic, padding keeps "same" geometry for
/// stride 1 and halves each spatial dim for stride 2 on even inputs.
struct Conv3d {
    Var weight;  // [Cout, Cin, k, k, k]
    Var bias;    // {Cout}
    int stride = 1;
    int pad = 1;

    Conv3d() = default;
    Conv3d(int64_t cin, int64_t cout, int64_t kernel, int stride_, Rng& rng,
           bool zero_init = false);

    Var operator()(const Var& x) const { return conv3d(x, weight, bias, stride, pad); }
    void collect(ParamCollector& pc) const {
        pc.add("w", weight);
        pc.add("b", bias);
    }
};

struct GroupNorm {
    Var gamma;
    Var beta;
    int groups = 1;

    GroupNorm() = default;
    explicit GroupNorm(int64_t channels);

    Var operator()(const Var& x) const { return group_norm(x, gamma, beta, groups); }
    void collect(ParamCollector& pc) const {
        pc.add("g", gamma);
        pc.add("b", beta);
    }
};

struct Linear {
    Var weight;  // {out, in}
    Var bias;    // {out}

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng);

    Var operator()(const Var& x) const { return linear_vec(x, weight, bias); }
    void collect(ParamCollector& pc) const {
        pc.add("w", weight);
        pc.add("b", bias);
    }
};

struct PReLU {
    Var alpha;  // {C}, initialized to 0.25

    PReLU() = default;
    explicit PReLU(int64_t channels);

    Var operator()(const Var& x) const { return prelu(x, alpha); }
    void collect(ParamCollector& pc) const { pc.add("a", alpha); }
};

/// Pre-activation residual block with optional timestep-embedding injection:
/// GN -> SiLU -> conv -> (+ temb bias) -> GN -> SiLU -> conv, plus identity or
/// 1x1x1-projected skip.
struct ResBlock {
    GroupNorm norm1;
    Conv3d conv1;
    GroupNorm norm2;
    Conv3d conv2;
    std::optional<Conv3d> skip_proj;
    std::optional<Linear> temb_proj;

    ResBlock() = default;
    ResBlock(int64_t cin, int64_t cout, int64_t temb_dim, Rng& rng);

    Var operator()(const Var& x, const Var* temb = nullptr) const;
    void collect(ParamCollector& pc) const;
};

/// Single-head self-attention over flattened spatial positions.
struct SelfAttention {
    GroupNorm norm;
    Var wq, wk, wv, wo;  // {C, C} each
    int64_t channels = 0;

    SelfAttention() = default;
    SelfAttention(int64_t channels_, Rng& rng);

    Var operator()(const Var& x) const;
    void collect(ParamCollector& pc) const;
};

/// Largest group count <= 8 that divides the channel count.
int norm_groups_for(int64_t channels);

/// Kaiming-normal init tensor for conv/linear weights.
Tensor kaiming_normal(const ShapeVec& shape, int64_t fan_in, Rng& rng);

}  // namespace voxsyn::nn
