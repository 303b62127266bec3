// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace voxsyn::nn {

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.value().same_shape(b.value()), Error::Kind::shape,
            std::string(op) + ": shape mismatch");
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }

// Elementwise op with y = f(x) and dx += dfdx(x, y) * g.
template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF dfdx) {
    Tensor out(a.value().shape());
    const Tensor& x = a.value();
    for (int64_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return make_op(std::move(out), {a}, [dfdx](Node& self) {
        auto& in = self.inputs[0];
        if (!wants_grad(in)) return;
        Tensor& gin = in->grad_buf();
        const Tensor& x = in->value;
        const Tensor& y = self.value;
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < x.size(); ++i) gin[i] += dfdx(x[i], y[i]) * g[i];
    });
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.value().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        for (int k = 0; k < 2; ++k) {
            auto& in = self.inputs[static_cast<size_t>(k)];
            if (!wants_grad(in)) continue;
            Tensor& gin = in->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gin[i] += g[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.value().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        if (wants_grad(self.inputs[0])) {
            Tensor& gin = self.inputs[0]->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gin[i] += g[i];
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& gin = self.inputs[1]->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gin[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.value().shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_op(std::move(out), {a, b}, [](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& av = self.inputs[0]->value;
        const Tensor& bv = self.inputs[1]->value;
        if (wants_grad(self.inputs[0])) {
            Tensor& gin = self.inputs[0]->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gin[i] += g[i] * bv[i];
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& gin = self.inputs[1]->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gin[i] += g[i] * av[i];
        }
    });
}

Var neg(const Var& a) {
    return unary_op(a, [](Scalar x) { return -x; },
                    [](Scalar, Scalar) { return -1.0; });
}

Var add_scalar(const Var& a, Scalar s) {
    return unary_op(a, [s](Scalar x) { return x + s; },
                    [](Scalar, Scalar) { return 1.0; });
}

Var mul_scalar(const Var& a, Scalar s) {
    return unary_op(a, [s](Scalar x) { return x * s; },
                    [s](Scalar, Scalar) { return s; });
}

Var square(const Var& a) {
    return unary_op(a, [](Scalar x) { return x * x; },
                    [](Scalar x, Scalar) { return 2.0 * x; });
}

Var exp_v(const Var& a) {
    return unary_op(a, [](Scalar x) { return std::exp(x); },
                    [](Scalar, Scalar y) { return y; });
}

Var log_v(const Var& a) {
    return unary_op(a, [](Scalar x) { return std::log(x); },
                    [](Scalar x, Scalar) { return 1.0 / x; });
}

Var sqrt_v(const Var& a) {
    return unary_op(a, [](Scalar x) { return std::sqrt(x); },
                    [](Scalar, Scalar y) { return 0.5 / y; });
}

Var sigmoid(const Var& a) {
    return unary_op(a, [](Scalar x) { return 1.0 / (1.0 + std::exp(-x)); },
                    [](Scalar, Scalar y) { return y * (1.0 - y); });
}

Var silu(const Var& a) {
    return unary_op(a,
                    [](Scalar x) { return x / (1.0 + std::exp(-x)); },
                    [](Scalar x, Scalar) {
                        Scalar s = 1.0 / (1.0 + std::exp(-x));
                        return s * (1.0 + x * (1.0 - s));
                    });
}

Var relu(const Var& a) {
    return unary_op(a, [](Scalar x) { return x > 0 ? x : 0.0; },
                    [](Scalar x, Scalar) { return x > 0 ? 1.0 : 0.0; });
}

Var clamp_v(const Var& a, Scalar lo, Scalar hi) {
    return unary_op(a,
                    [lo, hi](Scalar x) { return std::min(std::max(x, lo), hi); },
                    [lo, hi](Scalar x, Scalar) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var prelu(const Var& a, const Var& alpha) {
    const Tensor& x = a.value();
    const Tensor& al = alpha.value();
    require(x.rank() >= 1 && al.rank() == 1 && al.dim(0) == x.dim(0),
            Error::Kind::shape, "prelu: alpha must have one entry per channel");
    int64_t channels = x.dim(0);
    int64_t slab = x.size() / channels;
    Tensor out(x.shape());
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t i = 0; i < slab; ++i) {
            Scalar v = x[c * slab + i];
            out[c * slab + i] = v > 0 ? v : al[c] * v;
        }
    return make_op(std::move(out), {a, alpha}, [channels, slab](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& x = self.inputs[0]->value;
        const Tensor& al = self.inputs[1]->value;
        if (wants_grad(self.inputs[0])) {
            Tensor& gx = self.inputs[0]->grad_buf();
            for (int64_t c = 0; c < channels; ++c)
                for (int64_t i = 0; i < slab; ++i) {
                    int64_t k = c * slab + i;
                    gx[k] += g[k] * (x[k] > 0 ? 1.0 : al[c]);
                }
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& ga = self.inputs[1]->grad_buf();
            for (int64_t c = 0; c < channels; ++c) {
                Scalar acc = 0;
                for (int64_t i = 0; i < slab; ++i) {
                    int64_t k = c * slab + i;
                    if (x[k] <= 0) acc += g[k] * x[k];
                }
                ga[c] += acc;
            }
        }
    });
}

Var sum_all(const Var& a) {
    Scalar s = 0;
    for (int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    Tensor out({1});
    out[0] = s;
    return make_op(std::move(out), {a}, [](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        Scalar g = self.grad[0];
        for (int64_t i = 0; i < gin.size(); ++i) gin[i] += g;
    });
}

Var mean_all(const Var& a) {
    return mul_scalar(sum_all(a), 1.0 / static_cast<Scalar>(a.value().size()));
}

Var mse(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

Var reshape(const Var& a, ShapeVec shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_op(std::move(out), {a}, [](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < g.size(); ++i) gin[i] += g[i];
    });
}

Var transpose2(const Var& a) {
    const Tensor& x = a.value();
    require(x.rank() == 2, Error::Kind::shape, "transpose2: rank-2 input required");
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    return make_op(std::move(out), {a}, [m, n](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) gin[i * n + j] += g[j * m + i];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == bv.rank() && av.rank() >= 2, Error::Kind::shape,
            "concat_channels: rank mismatch");
    for (int64_t i = 1; i < av.rank(); ++i)
        require(av.dim(i) == bv.dim(i), Error::Kind::shape,
                "concat_channels: trailing dims mismatch");
    ShapeVec shape = av.shape();
    shape[0] = av.dim(0) + bv.dim(0);
    Tensor out(shape);
    std::copy(av.data(), av.data() + av.size(), out.data());
    std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
    int64_t na = av.size();
    return make_op(std::move(out), {a, b}, [na](Node& self) {
        const Tensor& g = self.grad;
        if (wants_grad(self.inputs[0])) {
            Tensor& gin = self.inputs[0]->grad_buf();
            for (int64_t i = 0; i < na; ++i) gin[i] += g[i];
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& gin = self.inputs[1]->grad_buf();
            for (int64_t i = 0; i < g.size() - na; ++i) gin[i] += g[na + i];
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
            Error::Kind::shape, "matmul: incompatible shapes");
    int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    {
        CMapMat A(av.data(), m, k), B(bv.data(), k, n);
        MapMat O(out.data(), m, n);
        O.noalias() = A * B;
    }
    return make_op(std::move(out), {a, b}, [m, k, n](Node& self) {
        CMapMat G(self.grad.data(), m, n);
        CMapMat A(self.inputs[0]->value.data(), m, k);
        CMapMat B(self.inputs[1]->value.data(), k, n);
        if (wants_grad(self.inputs[0])) {
            MapMat GA(self.inputs[0]->grad_buf().data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        if (wants_grad(self.inputs[1])) {
            MapMat GB(self.inputs[1]->grad_buf().data(), k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

Var softmax_rows(const Var& a) {
    const Tensor& x = a.value();
    require(x.rank() == 2, Error::Kind::shape, "softmax_rows: rank-2 input required");
    int64_t m = x.dim(0), n = x.dim(1);
    Tensor out(x.shape());
    for (int64_t i = 0; i < m; ++i) {
        const Scalar* row = x.data() + i * n;
        Scalar* orow = out.data() + i * n;
        Scalar mx = row[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        Scalar z = 0;
        for (int64_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (int64_t j = 0; j < n; ++j) orow[j] /= z;
    }
    return make_op(std::move(out), {a}, [m, n](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        const Tensor& y = self.value;
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < m; ++i) {
            Scalar dot = 0;
            for (int64_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (int64_t j = 0; j < n; ++j)
                gin[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Var softmax_channels(const Var& a) {
    const Tensor& x = a.value();
    require(x.rank() >= 2, Error::Kind::shape, "softmax_channels: rank >= 2 required");
    int64_t c = x.dim(0);
    int64_t n = x.size() / c;
    Tensor out(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        Scalar mx = x[i];
        for (int64_t k = 1; k < c; ++k) mx = std::max(mx, x[k * n + i]);
        Scalar z = 0;
        for (int64_t k = 0; k < c; ++k) {
            out[k * n + i] = std::exp(x[k * n + i] - mx);
            z += out[k * n + i];
        }
        for (int64_t k = 0; k < c; ++k) out[k * n + i] /= z;
    }
    return make_op(std::move(out), {a}, [c, n](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        const Tensor& y = self.value;
        const Tensor& g = self.grad;
        for (int64_t i = 0; i < n; ++i) {
            Scalar dot = 0;
            for (int64_t k = 0; k < c; ++k) dot += g[k * n + i] * y[k * n + i];
            for (int64_t k = 0; k < c; ++k)
                gin[k * n + i] += y[k * n + i] * (g[k * n + i] - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// conv3d: im2col + GEMM. x [Cin,D,H,W], w [Cout,Cin,k,k,k], b {Cout}.
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    int64_t cin, d, h, w;
    int64_t cout, k;
    int stride, pad;
    int64_t od, oh, ow;
    int64_t patch() const { return cin * k * k * k; }
    int64_t nout() const { return od * oh * ow; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    require(x.rank() == 4, Error::Kind::shape, "conv3d: input must be [C,D,H,W]");
    require(w.rank() == 5, Error::Kind::shape, "conv3d: weight must be [Cout,Cin,k,k,k]");
    require(w.dim(2) == w.dim(3) && w.dim(3) == w.dim(4), Error::Kind::shape,
            "conv3d: cubic kernels only");
    require(w.dim(1) == x.dim(0), Error::Kind::shape,
            "conv3d: weight Cin does not match input channels");
    ConvDims cd;
    cd.cin = x.dim(0);
    cd.d = x.dim(1);
    cd.h = x.dim(2);
    cd.w = x.dim(3);
    cd.cout = w.dim(0);
    cd.k = w.dim(2);
    cd.stride = stride;
    cd.pad = pad;
    cd.od = (cd.d + 2 * pad - cd.k) / stride + 1;
    cd.oh = (cd.h + 2 * pad - cd.k) / stride + 1;
    cd.ow = (cd.w + 2 * pad - cd.k) / stride + 1;
    require(cd.od >= 1 && cd.oh >= 1 && cd.ow >= 1, Error::Kind::shape,
            "conv3d: output would be empty");
    return cd;
}

void im2col(const Scalar* x, const ConvDims& cd, Scalar* col) {
    const int64_t k = cd.k;
    const int64_t n = cd.nout();
    for (int64_t c = 0; c < cd.cin; ++c) {
        const Scalar* xc = x + c * cd.d * cd.h * cd.w;
        for (int64_t kd = 0; kd < k; ++kd)
            for (int64_t kh = 0; kh < k; ++kh)
                for (int64_t kw = 0; kw < k; ++kw) {
                    Scalar* row = col + (((c * k + kd) * k + kh) * k + kw) * n;
                    int64_t idx = 0;
                    for (int64_t od = 0; od < cd.od; ++od) {
                        int64_t id = od * cd.stride + kd - cd.pad;
                        for (int64_t oh = 0; oh < cd.oh; ++oh) {
                            int64_t ih = oh * cd.stride + kh - cd.pad;
                            for (int64_t ow = 0; ow < cd.ow; ++ow, ++idx) {
                                int64_t iw = ow * cd.stride + kw - cd.pad;
                                bool in = id >= 0 && id < cd.d && ih >= 0 && ih < cd.h &&
                                          iw >= 0 && iw < cd.w;
                                row[idx] = in ? xc[(id * cd.h + ih) * cd.w + iw] : 0.0;
                            }
                        }
                    }
                }
    }
}

void col2im_add(const Scalar* col, const ConvDims& cd, Scalar* gx) {
    const int64_t k = cd.k;
    const int64_t n = cd.nout();
    for (int64_t c = 0; c < cd.cin; ++c) {
        Scalar* xc = gx + c * cd.d * cd.h * cd.w;
        for (int64_t kd = 0; kd < k; ++kd)
            for (int64_t kh = 0; kh < k; ++kh)
                for (int64_t kw = 0; kw < k; ++kw) {
                    const Scalar* row = col + (((c * k + kd) * k + kh) * k + kw) * n;
                    int64_t idx = 0;
                    for (int64_t od = 0; od < cd.od; ++od) {
                        int64_t id = od * cd.stride + kd - cd.pad;
                        for (int64_t oh = 0; oh < cd.oh; ++oh) {
                            int64_t ih = oh * cd.stride + kh - cd.pad;
                            for (int64_t ow = 0; ow < cd.ow; ++ow, ++idx) {
                                int64_t iw = ow * cd.stride + kw - cd.pad;
                                if (id >= 0 && id < cd.d && ih >= 0 && ih < cd.h &&
                                    iw >= 0 && iw < cd.w)
                                    xc[(id * cd.h + ih) * cd.w + iw] += row[idx];
                            }
                        }
                    }
                }
    }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const ConvDims cd = conv_dims(x.value(), w.value(), stride, pad);
    require(b.value().rank() == 1 && b.value().dim(0) == cd.cout, Error::Kind::shape,
            "conv3d: bias must have one entry per output channel");

    const int64_t patch = cd.patch();
    const int64_t n = cd.nout();
    std::vector<Scalar> col(static_cast<size_t>(patch * n));
    im2col(x.value().data(), cd, col.data());

    Tensor out({cd.cout, cd.od, cd.oh, cd.ow});
    {
        CMapMat W(w.value().data(), cd.cout, patch);
        CMapMat C(col.data(), patch, n);
        MapMat O(out.data(), cd.cout, n);
        O.noalias() = W * C;
    }
    for (int64_t c = 0; c < cd.cout; ++c) {
        Scalar bias = b.value()[c];
        Scalar* oc = out.data() + c * n;
        for (int64_t i = 0; i < n; ++i) oc[i] += bias;
    }

    return make_op(std::move(out), {x, w, b}, [cd](Node& self) {
        const int64_t patch = cd.patch();
        const int64_t n = cd.nout();
        auto& xin = self.inputs[0];
        auto& win = self.inputs[1];
        auto& bin = self.inputs[2];
        CMapMat G(self.grad.data(), cd.cout, n);

        if (wants_grad(win)) {
            std::vector<Scalar> col(static_cast<size_t>(patch * n));
            im2col(xin->value.data(), cd, col.data());
            CMapMat C(col.data(), patch, n);
            MapMat GW(win->grad_buf().data(), cd.cout, patch);
            GW.noalias() += G * C.transpose();
        }
        if (wants_grad(bin)) {
            Tensor& gb = bin->grad_buf();
            for (int64_t c = 0; c < cd.cout; ++c) {
                Scalar acc = 0;
                const Scalar* gc = self.grad.data() + c * n;
                for (int64_t i = 0; i < n; ++i) acc += gc[i];
                gb[c] += acc;
            }
        }
        if (wants_grad(xin)) {
            std::vector<Scalar> gcol(static_cast<size_t>(patch * n));
            CMapMat W(win->value.data(), cd.cout, patch);
            MapMat GC(gcol.data(), patch, n);
            GC.noalias() = W.transpose() * G;
            col2im_add(gcol.data(), cd, xin->grad_buf().data());
        }
    });
}

Var upsample_nearest2x(const Var& x) {
    const Tensor& xv = x.value();
    require(xv.rank() == 4, Error::Kind::shape, "upsample: input must be [C,D,H,W]");
    int64_t c = xv.dim(0), d = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor out({c, 2 * d, 2 * h, 2 * w});
    for (int64_t cc = 0; cc < c; ++cc)
        for (int64_t dd = 0; dd < 2 * d; ++dd)
            for (int64_t hh = 0; hh < 2 * h; ++hh) {
                const Scalar* src =
                    xv.data() + ((cc * d + dd / 2) * h + hh / 2) * w;
                Scalar* dst = out.data() + ((cc * 2 * d + dd) * 2 * h + hh) * 2 * w;
                for (int64_t ww = 0; ww < 2 * w; ++ww) dst[ww] = src[ww / 2];
            }
    return make_op(std::move(out), {x}, [c, d, h, w](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gin = self.inputs[0]->grad_buf();
        const Tensor& g = self.grad;
        for (int64_t cc = 0; cc < c; ++cc)
            for (int64_t dd = 0; dd < 2 * d; ++dd)
                for (int64_t hh = 0; hh < 2 * h; ++hh) {
                    Scalar* dst = gin.data() + ((cc * d + dd / 2) * h + hh / 2) * w;
                    const Scalar* src =
                        g.data() + ((cc * 2 * d + dd) * 2 * h + hh) * 2 * w;
                    for (int64_t ww = 0; ww < 2 * w; ++ww) dst[ww / 2] += src[ww];
                }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Scalar eps) {
    const Tensor& xv = x.value();
    require(xv.rank() >= 2, Error::Kind::shape, "group_norm: rank >= 2 required");
    int64_t c = xv.dim(0);
    require(c % groups == 0, Error::Kind::shape, "group_norm: channels not divisible by groups");
    require(gamma.value().size() == c && beta.value().size() == c, Error::Kind::shape,
            "group_norm: gamma/beta must have one entry per channel");
    int64_t spatial = xv.size() / c;
    int64_t cg = c / groups;
    int64_t gsize = cg * spatial;

    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<Scalar> inv_sigma(static_cast<size_t>(groups));
    for (int64_t g = 0; g < groups; ++g) {
        const Scalar* base = xv.data() + g * gsize;
        Scalar mean = 0;
        for (int64_t i = 0; i < gsize; ++i) mean += base[i];
        mean /= static_cast<Scalar>(gsize);
        Scalar var = 0;
        for (int64_t i = 0; i < gsize; ++i) {
            Scalar t = base[i] - mean;
            var += t * t;
        }
        var /= static_cast<Scalar>(gsize);
        Scalar is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(g)] = is;
        for (int64_t i = 0; i < gsize; ++i)
            xhat[g * gsize + i] = (base[i] - mean) * is;
    }
    for (int64_t ch = 0; ch < c; ++ch) {
        Scalar ga = gamma.value()[ch], be = beta.value()[ch];
        for (int64_t i = 0; i < spatial; ++i)
            out[ch * spatial + i] = ga * xhat[ch * spatial + i] + be;
    }

    auto xhat_ptr = std::make_shared<Tensor>(std::move(xhat));
    auto is_ptr = std::make_shared<std::vector<Scalar>>(std::move(inv_sigma));
    return make_op(std::move(out), {x, gamma, beta},
                   [groups, c, spatial, cg, gsize, xhat_ptr, is_ptr](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& xh = *xhat_ptr;
        const Tensor& gam = self.inputs[1]->value;

        if (wants_grad(self.inputs[1])) {
            Tensor& gg = self.inputs[1]->grad_buf();
            for (int64_t ch = 0; ch < c; ++ch) {
                Scalar acc = 0;
                for (int64_t i = 0; i < spatial; ++i)
                    acc += g[ch * spatial + i] * xh[ch * spatial + i];
                gg[ch] += acc;
            }
        }
        if (wants_grad(self.inputs[2])) {
            Tensor& gb = self.inputs[2]->grad_buf();
            for (int64_t ch = 0; ch < c; ++ch) {
                Scalar acc = 0;
                for (int64_t i = 0; i < spatial; ++i) acc += g[ch * spatial + i];
                gb[ch] += acc;
            }
        }
        if (wants_grad(self.inputs[0])) {
            Tensor& gx = self.inputs[0]->grad_buf();
            for (int64_t grp = 0; grp < groups; ++grp) {
                Scalar m1 = 0, m2 = 0;
                for (int64_t j = 0; j < cg; ++j) {
                    int64_t ch = grp * cg + j;
                    Scalar ga = gam[ch];
                    for (int64_t i = 0; i < spatial; ++i) {
                        int64_t k = ch * spatial + i;
                        Scalar w = g[k] * ga;
                        m1 += w;
                        m2 += w * xh[k];
                    }
                }
                m1 /= static_cast<Scalar>(gsize);
                m2 /= static_cast<Scalar>(gsize);
                Scalar is = (*is_ptr)[static_cast<size_t>(grp)];
                for (int64_t j = 0; j < cg; ++j) {
                    int64_t ch = grp * cg + j;
                    Scalar ga = gam[ch];
                    for (int64_t i = 0; i < spatial; ++i) {
                        int64_t k = ch * spatial + i;
                        gx[k] += (g[k] * ga - m1 - xh[k] * m2) * is;
                    }
                }
            }
        }
    });
}

Var linear_vec(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    require(xv.rank() == 1 && wv.rank() == 2 && wv.dim(1) == xv.dim(0),
            Error::Kind::shape, "linear_vec: incompatible shapes");
    require(b.value().rank() == 1 && b.value().dim(0) == wv.dim(0), Error::Kind::shape,
            "linear_vec: bias shape mismatch");
    int64_t m = wv.dim(0), k = wv.dim(1);
    Tensor out({m});
    for (int64_t i = 0; i < m; ++i) {
        Scalar acc = b.value()[i];
        const Scalar* row = wv.data() + i * k;
        for (int64_t j = 0; j < k; ++j) acc += row[j] * xv[j];
        out[i] = acc;
    }
    return make_op(std::move(out), {x, w, b}, [m, k](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& xv = self.inputs[0]->value;
        const Tensor& wv = self.inputs[1]->value;
        if (wants_grad(self.inputs[0])) {
            Tensor& gx = self.inputs[0]->grad_buf();
            for (int64_t j = 0; j < k; ++j) {
                Scalar acc = 0;
                for (int64_t i = 0; i < m; ++i) acc += wv[i * k + j] * g[i];
                gx[j] += acc;
            }
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& gw = self.inputs[1]->grad_buf();
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < k; ++j) gw[i * k + j] += g[i] * xv[j];
        }
        if (wants_grad(self.inputs[2])) {
            Tensor& gb = self.inputs[2]->grad_buf();
            for (int64_t i = 0; i < m; ++i) gb[i] += g[i];
        }
    });
}

Var add_channel_bias(const Var& x, const Var& bias) {
    const Tensor& xv = x.value();
    require(xv.rank() >= 2, Error::Kind::shape, "add_channel_bias: rank >= 2 required");
    require(bias.value().rank() == 1 && bias.value().dim(0) == xv.dim(0),
            Error::Kind::shape, "add_channel_bias: bias shape mismatch");
    int64_t c = xv.dim(0);
    int64_t slab = xv.size() / c;
    Tensor out(xv.shape());
    for (int64_t ch = 0; ch < c; ++ch) {
        Scalar bv = bias.value()[ch];
        for (int64_t i = 0; i < slab; ++i) out[ch * slab + i] = xv[ch * slab + i] + bv;
    }
    return make_op(std::move(out), {x, bias}, [c, slab](Node& self) {
        const Tensor& g = self.grad;
        if (wants_grad(self.inputs[0])) {
            Tensor& gx = self.inputs[0]->grad_buf();
            for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (wants_grad(self.inputs[1])) {
            Tensor& gb = self.inputs[1]->grad_buf();
            for (int64_t ch = 0; ch < c; ++ch) {
                Scalar acc = 0;
                for (int64_t i = 0; i < slab; ++i) acc += g[ch * slab + i];
                gb[ch] += acc;
            }
        }
    });
}

Var soft_dice_loss(const Var& p, const Tensor& onehot_g, Scalar eps,
                   bool foreground_only) {
    const Tensor& pv = p.value();
    require(pv.same_shape(onehot_g), Error::Kind::shape,
            "soft_dice_loss: prediction/target shape mismatch");
    require(pv.rank() >= 2, Error::Kind::shape, "soft_dice_loss: rank >= 2 required");
    int64_t c = pv.dim(0);
    int64_t n = pv.size() / c;
    int64_t c0 = foreground_only ? 1 : 0;
    require(c > c0, Error::Kind::shape, "soft_dice_loss: no classes to reduce over");
    int64_t nclasses = c - c0;

    auto stats = std::make_shared<std::vector<Scalar>>();  // per class: spg, sp, sg
    stats->resize(static_cast<size_t>(3 * c));
    Scalar total = 0;
    for (int64_t k = 0; k < c; ++k) {
        Scalar spg = 0, sp = 0, sg = 0;
        const Scalar* pc = pv.data() + k * n;
        const Scalar* gc = onehot_g.data() + k * n;
        for (int64_t i = 0; i < n; ++i) {
            spg += pc[i] * gc[i];
            sp += pc[i];
            sg += gc[i];
        }
        (*stats)[static_cast<size_t>(3 * k)] = spg;
        (*stats)[static_cast<size_t>(3 * k + 1)] = sp;
        (*stats)[static_cast<size_t>(3 * k + 2)] = sg;
        if (k >= c0) total += 1.0 - (2.0 * spg + eps) / (sp + sg + eps);
    }
    Tensor out({1});
    out[0] = total / static_cast<Scalar>(nclasses);

    auto g_copy = std::make_shared<Tensor>(onehot_g);
    return make_op(std::move(out), {p},
                   [c, n, c0, nclasses, eps, stats, g_copy](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gp = self.inputs[0]->grad_buf();
        Scalar up = self.grad[0] / static_cast<Scalar>(nclasses);
        for (int64_t k = c0; k < c; ++k) {
            Scalar spg = (*stats)[static_cast<size_t>(3 * k)];
            Scalar sp = (*stats)[static_cast<size_t>(3 * k + 1)];
            Scalar sg = (*stats)[static_cast<size_t>(3 * k + 2)];
            Scalar num = 2.0 * spg + eps;
            Scalar den = sp + sg + eps;
            const Scalar* gc = g_copy->data() + k * n;
            Scalar* gpc = gp.data() + k * n;
            Scalar inv_den2 = 1.0 / (den * den);
            for (int64_t i = 0; i < n; ++i)
                gpc[i] += up * (-(2.0 * gc[i] * den - num) * inv_den2);
        }
    });
}

Var cross_entropy_nll(const Var& p, const std::vector<uint8_t>& labels, bool binary,
                      Scalar clamp_eps) {
    const Tensor& pv = p.value();
    require(pv.rank() >= 2, Error::Kind::shape, "cross_entropy: rank >= 2 required");
    int64_t c = pv.dim(0);
    int64_t n = pv.size() / c;
    require(static_cast<int64_t>(labels.size()) == n, Error::Kind::shape,
            "cross_entropy: label count mismatch");
    if (binary)
        require(c == 2, Error::Kind::validation,
                "cross_entropy: binary mode requires 2 classes");
    const Scalar lo = clamp_eps, hi = 1.0 - clamp_eps;
    auto cl = [lo, hi](Scalar v) { return std::min(std::max(v, lo), hi); };

    Scalar total = 0;
    if (binary) {
        for (int64_t i = 0; i < n; ++i) {
            Scalar p1 = pv[n + i];
            total -= labels[static_cast<size_t>(i)] == 1 ? std::log(cl(p1))
                                                         : std::log(cl(1.0 - p1));
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            require(labels[static_cast<size_t>(i)] < c, Error::Kind::validation,
                    "cross_entropy: label id out of range");
            total -= std::log(cl(pv[labels[static_cast<size_t>(i)] * n + i]));
        }
    }
    Tensor out({1});
    out[0] = total / static_cast<Scalar>(n);

    auto labels_copy = std::make_shared<std::vector<uint8_t>>(labels);
    return make_op(std::move(out), {p}, [c, n, binary, lo, hi, labels_copy](Node& self) {
        if (!wants_grad(self.inputs[0])) return;
        Tensor& gp = self.inputs[0]->grad_buf();
        const Tensor& pv = self.inputs[0]->value;
        Scalar up = self.grad[0] / static_cast<Scalar>(n);
        if (binary) {
            for (int64_t i = 0; i < n; ++i) {
                Scalar p1 = pv[n + i];
                if ((*labels_copy)[static_cast<size_t>(i)] == 1) {
                    if (p1 > lo && p1 < hi) gp[n + i] += up * (-1.0 / p1);
                } else {
                    Scalar q = 1.0 - p1;
                    if (q > lo && q < hi) gp[n + i] += up * (1.0 / q);
                }
            }
        } else {
            for (int64_t i = 0; i < n; ++i) {
                int64_t k = (*labels_copy)[static_cast<size_t>(i)];
                Scalar pt = pv[k * n + i];
                if (pt > lo && pt < hi) gp[k * n + i] += up * (-1.0 / pt);
            }
        }
    });
}

Tensor tensor_add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), Error::Kind::shape, "tensor_add: shape mismatch");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor tensor_scale(const Tensor& a, Scalar s) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

Scalar tensor_mse(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), Error::Kind::shape, "tensor_mse: shape mismatch");
    Scalar acc = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        Scalar d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<Scalar>(a.size());
}

}  // namespace voxsyn::nn
