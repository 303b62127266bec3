// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/nn/optim.hpp"

#include <cmath>

namespace voxsyn::nn {

AdamW::AdamW(std::vector<Var> params, AdamWSettings settings)
    : params_(std::move(params)), settings_(settings) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.push_back(Tensor::zeros(p.shape()));
        v_.push_back(Tensor::zeros(p.shape()));
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
    ++t_;
    const Scalar b1 = settings_.beta1, b2 = settings_.beta2;
    const Scalar bc1 = 1.0 - std::pow(b1, static_cast<Scalar>(t_));
    const Scalar bc2 = 1.0 - std::pow(b2, static_cast<Scalar>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Var& p = params_[i];
        if (!p.has_grad()) continue;
        const Tensor& g = p.grad();
        Tensor& value = p.value_mut();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < value.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            Scalar m_hat = m[j] / bc1;
            Scalar v_hat = v[j] / bc2;
            value[j] -= settings_.lr *
                        (m_hat / (std::sqrt(v_hat) + settings_.eps) +
                         settings_.weight_decay * value[j]);
        }
    }
}

}  // namespace voxsyn::nn
