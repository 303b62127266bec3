// Copyright (c) 2026 voxsyn contributors
// SPDX-License-Identifier: Apache-2.0

#include "voxsyn/nn/graph.hpp"

#include <unordered_set>

namespace voxsyn::nn {

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
    bool needs_grad = false;
    for (const auto& in : inputs)
        if (in.defined() && in.requires_grad()) needs_grad = true;

    Var out = Var::leaf(std::move(value), needs_grad);
    if (needs_grad) {
        auto& node = *out.node();
        node.inputs.reserve(inputs.size());
        for (auto& in : inputs) node.inputs.push_back(in.node());
        node.backprop = std::move(backprop);
    }
    return out;
}

void backward(const Var& root) {
    require(root.defined() && root.value().size() == 1, Error::Kind::shape,
            "backward: root must be a defined scalar");

    // Iterative post-order DFS; the emitted order is deterministic because it
    // follows the recorded input order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->inputs.size()) {
            Node* child = node->inputs[next_child].get();
            ++next_child;
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buf().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && node->grad.size() > 0) node->backprop(*node);
    }
}

}  // namespace voxsyn::nn
