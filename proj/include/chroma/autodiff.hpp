#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chroma/tensor.hpp"

namespace chroma {

// One record of the define-by-run tape. Leaves have no parents and no
// backward function; parameters are leaves with requires_grad set.
struct Node {
    Tensor value;
    std::string op;
    std::vector<std::shared_ptr<Node>> parents;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    void accumulate(const Tensor& g);
};

// Handle to a tape node. Copies share the node.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    // Builds an op node. Parents that do not require grad are not retained;
    // when none do, the result is a constant and `backward` is dropped.
    static Var from_op(Tensor value, std::string op, std::vector<Var> parents,
                       std::function<void(Node&)> backward);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    const std::optional<Tensor>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& op() const { return node_->op; }

    // A constant holding a copy of this value, cut from the tape.
    Var detach() const;

    // Parameter maintenance between tapes (optimizer updates, checkpoint
    // restore). Never call while a tape referencing this node is alive.
    Tensor& mutable_value() { return node_->value; }
    void zero_grad() { node_->grad.reset(); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

// Reverse pass from a single-element loss. Gradients accumulate into every
// reachable leaf that requires grad; interior nodes are released afterwards.
void backward(const Var& loss);

// Vector-Jacobian product: runs the reverse pass with `seed` as the gradient
// of `output`. Same release semantics as backward(loss).
void backward(const Var& output, const Tensor& seed);

}  // namespace chroma
