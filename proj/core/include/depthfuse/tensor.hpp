#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace depthfuse {

/// Dimension list. Empty shape = scalar (one element).
using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

/// Dense N-d value with an optional reverse-mode gradient tape.
///
/// A Tensor is a cheap handle onto a graph node. Ops build fresh nodes that
/// keep their inputs alive; leaves (parameters, inputs) persist across
/// iterations and accumulate gradients until zero_grad(). backward() is only
/// valid on scalar outputs and may run once per forward pass.
///
/// Every op validates its output for NaN/Inf and throws NumericError on
/// violation; a tensor you can observe is always finite.
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;  // sized lazily during backward / on leaves
        bool requires_grad = false;
        bool leaf = true;
        bool backward_done = false;
        std::uint64_t seq = 0;
        std::vector<std::shared_ptr<Node>> parents;
        // Reads this->grad, accumulates into parents' grad buffers.
        std::function<void(Node&)> backprop;

        std::int64_t numel() const { return shape_numel(shape); }
        void ensure_grad() {
            if (grad.empty()) grad.assign(value.size(), 0.0);
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t size() const;
    bool requires_grad() const;
    bool is_leaf() const;

    std::span<const double> data() const;
    /// Mutable access to a leaf's values (parameter updates, finite-difference
    /// probes). Non-leaf tensors are read-only by contract.
    std::span<double> mutable_data();
    /// Value of a one-element tensor.
    double item() const;

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Reverse-mode sweep from a scalar output. Accumulates into the grad
    /// buffers of every reachable tensor that requires grad. Calling twice on
    /// the same output without re-running the forward pass is an error.
    void backward();

    // Op-implementation surface.
    const std::shared_ptr<Node>& node() const { return node_; }
    static Tensor wrap(std::shared_ptr<Node> node);
    static std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                           std::vector<std::shared_ptr<Node>> parents,
                                           std::function<void(Node&)> backprop);

private:
    std::shared_ptr<Node> node_;
};

/// Throws NumericError naming `what` if any element is NaN or infinite.
void check_finite(std::span<const double> values, const char* what);

}  // namespace depthfuse
