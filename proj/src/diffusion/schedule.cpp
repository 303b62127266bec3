// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/diffusion/schedule.hpp"

#include <cmath>

namespace voxsyn::diffusion {

void NoiseSchedule::validate() const {
    require(T >= 1, Error::Kind::validation, "NoiseSchedule: T must be >= 1");
    require(static_cast<int64_t>(betas.size()) == T &&
                static_cast<int64_t>(alphas.size()) == T &&
                static_cast<int64_t>(alpha_bars.size()) == T,
            Error::Kind::shape, "NoiseSchedule: array lengths must equal T");
    double prev_beta = 0.0;
    double prev_bar = 1.0;
    for (int64_t t = 1; t <= T; ++t) {
        double b = beta(t);
        require(b > 0.0 && b < 1.0, Error::Kind::validation,
                "NoiseSchedule: beta outside (0,1) at t=" + std::to_string(t));
        require(b >= prev_beta, Error::Kind::validation,
                "NoiseSchedule: betas must be non-decreasing");
        require(alpha(t) == 1.0 - b, Error::Kind::validation,
                "NoiseSchedule: alpha != 1 - beta");
        require(alpha_bar(t) < prev_bar, Error::Kind::validation,
                "NoiseSchedule: alpha_bar must be strictly decreasing");
        prev_beta = b;
        prev_bar = alpha_bar(t);
    }
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
    NoiseSchedule s;
    s.T = static_cast<int64_t>(betas.size());
    s.betas = std::move(betas);
    s.alphas.resize(s.betas.size());
    s.alpha_bars.resize(s.betas.size());
    double bar = 1.0;
    for (size_t i = 0; i < s.betas.size(); ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        bar *= s.alphas[i];
        s.alpha_bars[i] = bar;
    }
    s.validate();
    return s;
}

NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end,
                             ScheduleKind kind) {
    require(T >= 1, Error::Kind::validation, "build_schedule: T must be >= 1");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
            Error::Kind::validation,
            "build_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        double frac = T == 1 ? 0.0
                             : static_cast<double>(t) / static_cast<double>(T - 1);
        if (kind == ScheduleKind::linear) {
            betas[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
        } else {
            double root = std::sqrt(beta_start) + (std::sqrt(beta_end) - std::sqrt(beta_start)) * frac;
            betas[static_cast<size_t>(t)] = root * root;
        }
    }
    return NoiseSchedule::from_betas(std::move(betas));
}

nn::Tensor q_sample_at(const nn::Tensor& z0, double alpha_bar, const nn::Tensor& noise) {
    require(z0.same_shape(noise), Error::Kind::shape, "q_sample: z0/noise shape mismatch");
    require(alpha_bar >= 0.0 && alpha_bar <= 1.0, Error::Kind::validation,
            "q_sample: alpha_bar outside [0,1]");
    double sa = std::sqrt(alpha_bar);
    double sn = std::sqrt(1.0 - alpha_bar);
    nn::Tensor out(z0.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = sa * z0[i] + sn * noise[i];
    return out;
}

nn::Tensor q_sample(const nn::Tensor& z0, int64_t t, const nn::Tensor& noise,
                    const NoiseSchedule& schedule) {
    require(t >= 1 && t <= schedule.T, Error::Kind::validation,
            "q_sample: t outside [1,T]");
    return q_sample_at(z0, schedule.alpha_bar(t), noise);
}

}  // namespace voxsyn::diffusion
