// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "voxsyn/nn/tensor.hpp"

namespace voxsyn::diffusion {

enum class ScheduleKind { linear, scaled_linear };

/// Forward-process schedule: per-timestep beta_t, alpha_t = 1 - beta_t and
/// alpha_bar_t = prod alpha_s, with the t=0 convention alpha_bar_0 = 1.
/// Timesteps index 1..T.
struct NoiseSchedule {
    int64_t T = 0;
    std::vector<double> betas;       // index t-1
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    double beta(int64_t t) const { return betas[static_cast<size_t>(t - 1)]; }
    double alpha(int64_t t) const { return alphas[static_cast<size_t>(t - 1)]; }
    double alpha_bar(int64_t t) const {
        return t == 0 ? 1.0 : alpha_bars[static_cast<size_t>(t - 1)];
    }

    void validate() const;

    /// Recomputes alphas/alpha_bars from betas (element-exact).
    static NoiseSchedule from_betas(std::vector<double> betas);
};

NoiseSchedule build_schedule(int64_t T, double beta_start, double beta_end,
                             ScheduleKind kind);

/// sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * noise for an explicit
/// alpha_bar; the t=0 convention (alpha_bar 1) returns z0 exactly.
nn::Tensor q_sample_at(const nn::Tensor& z0, double alpha_bar, const nn::Tensor& noise);

/// Forward corruption at timestep t in [1, T].
nn::Tensor q_sample(const nn::Tensor& z0, int64_t t, const nn::Tensor& noise,
                    const NoiseSchedule& schedule);

}  // namespace voxsyn::diffusion
