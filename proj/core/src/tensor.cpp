#include "depthfuse/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "depthfuse/errors.hpp"

namespace depthfuse {

namespace {
std::atomic<std::uint64_t> g_seq{1};
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw ArgumentError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

void check_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + " produced a non-finite value");
        }
    }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from_vector(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), fill),
                       requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_vector(Shape{}, {v}, requires_grad);
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> data, bool requires_grad) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
        throw ArgumentError("data size " + std::to_string(data.size()) + " does not match shape " +
                            shape_str(shape));
    }
    check_finite(data, "tensor construction");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->leaf = true;
    node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

std::shared_ptr<Tensor::Node> Tensor::make_node(Shape shape, std::vector<double> value,
                                                std::vector<std::shared_ptr<Node>> parents,
                                                std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    node->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    for (const auto& p : node->parents) {
        if (p && p->requires_grad) {
            node->requires_grad = true;
            break;
        }
    }
    check_finite(node->value, "op forward");
    return node;
}

Tensor Tensor::wrap(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw ArgumentError("shape() on empty tensor");
    return node_->shape;
}

std::int64_t Tensor::size() const {
    if (!node_) return 0;
    return static_cast<std::int64_t>(node_->value.size());
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }

std::span<const double> Tensor::data() const {
    if (!node_) throw ArgumentError("data() on empty tensor");
    return node_->value;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw ArgumentError("mutable_data() on empty tensor");
    if (!node_->leaf) {
        throw ArgumentError("only leaf tensors may be mutated");
    }
    return node_->value;
}

double Tensor::item() const {
    if (!node_ || node_->value.size() != 1) {
        throw ArgumentError("item() requires a one-element tensor");
    }
    return node_->value[0];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!node_ || node_->grad.empty()) {
        throw ArgumentError("tensor has no gradient; run backward() first");
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_) return;
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() {
    if (!node_) throw ArgumentError("backward() on empty tensor");
    if (node_->value.size() != 1) {
        throw ArgumentError("backward() requires a scalar output, got shape " +
                            shape_str(node_->shape));
    }
    if (!node_->requires_grad) {
        throw ArgumentError("backward() on a tensor that does not require grad");
    }
    if (node_->backward_done) {
        throw ArgumentError("backward() called twice on the same output without a new forward pass");
    }
    node_->backward_done = true;

    // Collect the reachable subgraph iteratively, then replay in reverse
    // construction order. Node sequence numbers are globally monotone, so a
    // node always comes after every one of its parents.
    std::vector<Node*> order;
    {
        std::unordered_set<Node*> seen;
        std::vector<Node*> stack{node_.get()};
        seen.insert(node_.get());
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            order.push_back(n);
            for (const auto& p : n->parents) {
                if (p && p->requires_grad && seen.insert(p.get()).second) {
                    stack.push_back(p.get());
                }
            }
        }
        std::sort(order.begin(), order.end(),
                  [](const Node* a, const Node* b) { return a->seq > b->seq; });
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;

    for (Node* n : order) {
        if (n->grad.empty()) continue;  // no gradient ever reached this node
        check_finite(n->grad, "backward");
        if (n->backprop) {
            // Intermediate gradients only exist for grad-requiring parents.
            for (const auto& p : n->parents) {
                if (p && p->requires_grad) p->ensure_grad();
            }
            n->backprop(*n);
        }
    }
}

}  // namespace depthfuse
