#include "chroma/autodiff.hpp"

#include <unordered_set>

#include "chroma/errors.hpp"

namespace chroma {

void Node::accumulate(const Tensor& g) {
    if (!requires_grad) {
        return;
    }
    if (g.shape() != value.shape()) {
        throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                         shape_str(value.shape()) + " at op '" + op + "'");
    }
    if (!grad) {
        grad = g;
        return;
    }
    auto dst = grad->mutable_data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

Var Var::constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "constant";
    return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "parameter";
    node->requires_grad = true;
    return Var(std::move(node));
}

Var Var::from_op(Tensor value, std::string op, std::vector<Var> parents,
                 std::function<void(Node&)> backward) {
    require_finite(value, op);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = std::move(op);
    bool any = false;
    for (const auto& p : parents) {
        any = any || p.requires_grad();
    }
    if (any) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) {
            node->parents.push_back(p.node_);
        }
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

Var Var::detach() const { return constant(node_->value); }

void backward(const Var& loss) {
    if (!loss.defined()) {
        throw Error("backward on an undefined variable");
    }
    if (loss.value().numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " +
                         shape_str(loss.shape()));
    }
    backward(loss, Tensor(loss.shape(), 1.0f));
}

void backward(const Var& loss, const Tensor& seed) {
    if (!loss.defined()) {
        throw Error("backward on an undefined variable");
    }
    if (seed.shape() != loss.shape()) {
        throw ShapeError("backward seed " + shape_str(seed.shape()) + " does not match output " +
                         shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return;
    }

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }

    Node& root = *loss.node();
    root.grad = seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& node = **it;
        if (node.backward && node.grad) {
            node.backward(node);
        }
    }

    // Release the tape. Leaves keep their accumulated gradients.
    for (Node* node : order) {
        if (node->backward) {
            node->backward = nullptr;
            node->parents.clear();
            node->grad.reset();
        }
    }
}

}  // namespace chroma
