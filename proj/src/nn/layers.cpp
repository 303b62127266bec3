// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/nn/layers.hpp"

#include <cmath>

namespace voxsyn::nn {

int norm_groups_for(int64_t channels) {
    for (int g = 8; g >= 2; --g)
        if (channels % g == 0) return g;
    return 1;
}

Tensor kaiming_normal(const ShapeVec& shape, int64_t fan_in, Rng& rng) {
    Tensor t(shape);
    Scalar std = std::sqrt(2.0 / static_cast<Scalar>(fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * std;
    return t;
}

Conv3d::Conv3d(int64_t cin, int64_t cout, int64_t kernel, int stride_, Rng& rng,
               bool zero_init)
    : stride(stride_), pad(static_cast<int>(kernel / 2)) {
    ShapeVec wshape{cout, cin, kernel, kernel, kernel};
    if (zero_init) {
        weight = Var::leaf(Tensor::zeros(wshape), true);
    } else {
        weight = Var::leaf(kaiming_normal(wshape, cin * kernel * kernel * kernel, rng), true);
    }
    bias = Var::leaf(Tensor::zeros({cout}), true);
}

GroupNorm::GroupNorm(int64_t channels) : groups(norm_groups_for(channels)) {
    gamma = Var::leaf(Tensor::full({channels}, 1.0), true);
    beta = Var::leaf(Tensor::zeros({channels}), true);
}

Linear::Linear(int64_t in, int64_t out, Rng& rng) {
    weight = Var::leaf(kaiming_normal({out, in}, in, rng), true);
    bias = Var::leaf(Tensor::zeros({out}), true);
}

PReLU::PReLU(int64_t channels) {
    alpha = Var::leaf(Tensor::full({channels}, 0.25), true);
}

ResBlock::ResBlock(int64_t cin, int64_t cout, int64_t temb_dim, Rng& rng)
    : norm1(cin), conv1(cin, cout, 3, 1, rng), norm2(cout), conv2(cout, cout, 3, 1, rng) {
    if (cin != cout) skip_proj.emplace(cin, cout, 1, 1, rng);
    if (temb_dim > 0) temb_proj.emplace(temb_dim, cout, rng);
}

Var ResBlock::operator()(const Var& x, const Var* temb) const {
    Var h = conv1(silu(norm1(x)));
    if (temb_proj && temb) h = add_channel_bias(h, (*temb_proj)(*temb));
    h = conv2(silu(norm2(h)));
    Var s = skip_proj ? (*skip_proj)(x) : x;
    return add(h, s);
}

void ResBlock::collect(ParamCollector& pc) const {
    auto n1 = pc.scoped("n1");
    norm1.collect(n1);
    pc.absorb(std::move(n1));
    auto c1 = pc.scoped("c1");
    conv1.collect(c1);
    pc.absorb(std::move(c1));
    auto n2 = pc.scoped("n2");
    norm2.collect(n2);
    pc.absorb(std::move(n2));
    auto c2 = pc.scoped("c2");
    conv2.collect(c2);
    pc.absorb(std::move(c2));
    if (skip_proj) {
        auto sp = pc.scoped("skip");
        skip_proj->collect(sp);
        pc.absorb(std::move(sp));
    }
    if (temb_proj) {
        auto tp = pc.scoped("temb");
        temb_proj->collect(tp);
        pc.absorb(std::move(tp));
    }
}

SelfAttention::SelfAttention(int64_t channels_, Rng& rng)
    : norm(channels_), channels(channels_) {
    auto init = [&](Var& v) {
        v = Var::leaf(kaiming_normal({channels_, channels_}, channels_, rng), true);
    };
    init(wq);
    init(wk);
    init(wv);
    init(wo);
}

Var SelfAttention::operator()(const Var& x) const {
    const auto& shape = x.shape();
    int64_t n = x.value().size() / channels;
    Var h = norm(x);
    Var flat = transpose2(reshape(h, {channels, n}));  // [N, C]
    Var q = matmul(flat, wq);
    Var k = matmul(flat, wk);
    Var v = matmul(flat, wv);
    Var scores = mul_scalar(matmul(q, transpose2(k)),
                            1.0 / std::sqrt(static_cast<Scalar>(channels)));
    Var attn = matmul(softmax_rows(scores), v);
    Var out = reshape(transpose2(matmul(attn, wo)), shape);
    return add(x, out);
}

void SelfAttention::collect(ParamCollector& pc) const {
    auto np = pc.scoped("norm");
    norm.collect(np);
    pc.absorb(std::move(np));
    pc.add("wq", wq);
    pc.add("wk", wk);
    pc.add("wv", wv);
    pc.add("wo", wo);
}

}  // namespace voxsyn::nn
