#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "drl/tensor.hpp"

namespace drl {

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] inline bool grad_enabled() { return detail::grad_enabled; }

template <typename Scalar>
struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads `grad` of this node and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    /// Gradient buffer, zero-initialised on first access.
    Tensor<Scalar>& grad_buffer() {
        if (grad.empty()) grad = Tensor<Scalar>(value.shape());
        return grad;
    }
};

/// Handle to a value in the reverse-mode tape. Copies share the node.
template <typename Scalar>
class Var {
public:
    using NodeType = Node<Scalar>;

    Var() = default;
    explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

    static Var constant(Tensor<Scalar> value) {
        auto node = std::make_shared<NodeType>();
        node->value = std::move(value);
        return Var(std::move(node));
    }

    /// Leaf that accumulates gradients (a trainable parameter or probed input).
    static Var leaf(Tensor<Scalar> value, bool requires_grad = true) {
        auto node = std::make_shared<NodeType>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        return Var(std::move(node));
    }

    [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
    [[nodiscard]] const Tensor<Scalar>& value() const { return node_->value; }
    Tensor<Scalar>& mutable_value() { return node_->value; }
    [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    [[nodiscard]] const Tensor<Scalar>& grad() const { return node_->grad; }
    Tensor<Scalar>& grad() { return node_->grad; }
    void zero_grad() { node_->grad = Tensor<Scalar>(); }

    [[nodiscard]] Scalar item() const { return node_->value.item(); }

    [[nodiscard]] NodeType* node() const { return node_.get(); }
    [[nodiscard]] const std::shared_ptr<NodeType>& shared() const { return node_; }

    /// Same value, cut from the graph.
    [[nodiscard]] Var detach() const { return constant(node_->value); }

private:
    std::shared_ptr<NodeType> node_;
};

/// Builds the result node of an op. The backward closure is only kept when an
/// input requires a gradient and recording is enabled.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                        std::function<void(Node<Scalar>&)> backward) {
    auto node = std::make_shared<Node<Scalar>>();
    node->value = std::move(value);
    bool any = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) any = any || in.requires_grad();
    }
    if (any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (auto& in : inputs) node->inputs.push_back(in.shared());
        node->backward = std::move(backward);
    }
    return Var<Scalar>(std::move(node));
}

/// Reverse-mode sweep from a scalar root. Parameter grads accumulate.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
    if (root.value().size() != 1) throw DimensionError("backward() requires a scalar root");
    if (!root.requires_grad()) return;

    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<Scalar>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().data().setOnes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Scalar>* node = *it;
        if (node->backward && !node->grad.empty()) {
            node->backward(*node);
            // Intermediate gradients are no longer needed once propagated.
            node->grad = Tensor<Scalar>();
        }
    }
}

}  // namespace drl
