// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "voxsyn/util/error.hpp"
#include "voxsyn/util/rng.hpp"

namespace voxsyn::nn {

using Scalar = double;
using ShapeVec = std::vector<int64_t>;

/// Dense row-major tensor with value semantics. Volumetric fields use the
/// layout [C, D, H, W] (W fastest); scalars are shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(ShapeVec shape) : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
    Tensor(ShapeVec shape, Scalar fill) : shape_(std::move(shape)), data_(count(shape_), fill) {}

    static Tensor zeros(const ShapeVec& shape) { return Tensor(shape); }
    static Tensor full(const ShapeVec& shape, Scalar v) { return Tensor(shape, v); }

    static Tensor randn(const ShapeVec& shape, Rng& rng) {
        Tensor t(shape);
        for (auto& v : t.data_) v = rng.normal();
        return t;
    }

    const ShapeVec& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    Scalar& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    Scalar operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    std::vector<Scalar>& vec() { return data_; }
    const std::vector<Scalar>& vec() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (Scalar v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Returns a copy carrying a new shape; element count must match.
    Tensor reshaped(ShapeVec new_shape) const {
        require(count(new_shape) == size(), Error::Kind::shape,
                "reshape: element count mismatch");
        Tensor t = *this;
        t.shape_ = std::move(new_shape);
        return t;
    }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    static int64_t count(const ShapeVec& shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }

private:
    ShapeVec shape_;
    std::vector<Scalar> data_;
};

}  // namespace voxsyn::nn
