// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "voxsyn/nn/graph.hpp"

namespace voxsyn::nn {

struct AdamWSettings {
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
    Scalar weight_decay = 0.0;
};

/// AdamW with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps)
/// + wd * p). With lr == 0 a step leaves parameters untouched.
class AdamW {
public:
    AdamW(std::vector<Var> params, AdamWSettings settings);

    void zero_grad();
    void step();

    const AdamWSettings& settings() const { return settings_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamWSettings settings_;
    int64_t t_ = 0;
};

}  // namespace voxsyn::nn
