// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "voxsyn/nn/tensor.hpp"

namespace voxsyn::nn {

/// One node of the reverse-mode autodiff graph. Leaves carry parameters or
/// constants; interior nodes carry a backprop closure that reads this node's
/// gradient and accumulates into its inputs' gradients.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backprop;

    Tensor& grad_buf() {
        if (grad.size() == 0) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

/// Handle to a graph node. Copies share the node, so a parameter Var handed
/// to an optimizer and to a model refer to the same storage.
class Var {
public:
    Var() = default;

    static Var leaf(Tensor value, bool requires_grad) {
        Var v;
        v.node_ = std::make_shared<Node>();
        v.node_->value = std::move(value);
        v.node_->requires_grad = requires_grad;
        return v;
    }

    static Var constant(Tensor value) { return leaf(std::move(value), false); }

    bool defined() const { return node_ != nullptr; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    const Tensor& value() const { return node_->value; }
    Tensor& value_mut() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() > 0; }

    void zero_grad() {
        if (node_->grad.size() > 0) node_->grad.fill(0.0);
    }

    const ShapeVec& shape() const { return node_->value.shape(); }

    std::shared_ptr<Node>& node() { return node_; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Creates an op node. If no input requires a gradient the closure and input
/// list are dropped so inference-only passes carry no graph overhead.
Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop);

/// Reverse-mode sweep from a scalar root (shape {1}); seeds d(root)/d(root)=1.
/// Deterministic: topological order follows input order depth-first.
void backward(const Var& root);

}  // namespace voxsyn::nn
