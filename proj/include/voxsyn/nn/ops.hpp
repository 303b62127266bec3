// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "voxsyn/nn/graph.hpp"

namespace voxsyn::nn {

// Elementwise arithmetic. Shapes must match exactly; no implicit broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, Scalar s);
Var mul_scalar(const Var& a, Scalar s);

// Elementwise functions.
Var square(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var sqrt_v(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var relu(const Var& a);
Var prelu(const Var& a, const Var& alpha);  // alpha: {C}, a: [C, ...]
Var clamp_v(const Var& a, Scalar lo, Scalar hi);

// Reductions to shape {1}.
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mse(const Var& a, const Var& b);

// Shape manipulation.
Var reshape(const Var& a, ShapeVec shape);
Var transpose2(const Var& a);              // [m,n] -> [n,m]
Var concat_channels(const Var& a, const Var& b);  // along axis 0

// Linear algebra.
Var matmul(const Var& a, const Var& b);    // [m,k] x [k,n]
Var softmax_rows(const Var& a);            // [m,n], softmax along n
Var softmax_channels(const Var& a);        // [C, ...], softmax along C per position

// Neural-net primitives on [C, D, H, W] fields.
Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               Scalar eps = 1e-5);
Var linear_vec(const Var& x, const Var& w, const Var& b);  // x {k}, w {m,k}, b {m}
Var add_channel_bias(const Var& x, const Var& bias);       // bias {C}

/// Soft Dice loss on probability fields. p: [C, spatial...], onehot_g same
/// shape (constant). Per class: 1 - (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps),
/// reduced as the mean over all classes or foreground classes only.
Var soft_dice_loss(const Var& p, const Tensor& onehot_g, Scalar eps,
                   bool foreground_only);

/// Negative log likelihood on probability fields with clamping. p: [C, N...],
/// labels: per-voxel class ids. Categorical: mean of -log(clamp(p_true)).
/// Binary (requires C==2): mean of -[g*log(p1) + (1-g)*log(1-p1)] with both
/// factors clamped.
Var cross_entropy_nll(const Var& p, const std::vector<uint8_t>& labels,
                      bool binary, Scalar clamp_eps);

// Non-graph helpers on plain tensors.
Tensor tensor_add(const Tensor& a, const Tensor& b);
Tensor tensor_scale(const Tensor& a, Scalar s);
Scalar tensor_mse(const Tensor& a, const Tensor& b);

}  // namespace voxsyn::nn
