#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "depthfuse/ops.hpp"
#include "depthfuse/rng.hpp"
#include "depthfuse/tensor.hpp"

namespace depthfuse {

// Named parameters in registration order, plus non-learned buffers
// (batchnorm running stats). Registration order is the serialization order.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor param);
    void add_buffer(const std::string& name, std::shared_ptr<std::vector<double>> buffer);

    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    const std::vector<std::string>& names() const { return order_; }
    const std::vector<std::string>& buffer_names() const { return buffer_order_; }
    std::vector<double>& buffer(const std::string& name);
    const std::vector<double>& buffer(const std::string& name) const;

    std::vector<Tensor*> params();
    void zero_grad();

private:
    std::vector<std::string> order_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::string> buffer_order_;
    std::vector<std::pair<std::string, std::shared_ptr<std::vector<double>>>> buffers_;
};

// Uniform +-sqrt(6 / fan_in) for weights, zeros for biases.
Tensor init_conv_weight(const ConvSpec& spec, Rng& rng);

struct Conv2d {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;

    Conv2d() = default;
    Conv2d(ParamStore& store, const std::string& prefix, const ConvSpec& spec, Rng& rng);
    Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, spec); }
};

struct BatchNorm2d {
    Tensor gamma;
    Tensor beta;
    BatchNormState state;

    BatchNorm2d() = default;
    BatchNorm2d(ParamStore& store, const std::string& prefix, int channels);
    Tensor operator()(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, state, mode); }
};

// SGD with classical momentum: v <- m*v + g; p <- p - lr*v.
class Sgd {
public:
    Sgd(std::vector<Tensor*> params, double lr, double momentum);
    void step();
    double lr() const { return lr_; }

private:
    std::vector<Tensor*> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Central-difference check of d(loss)/d(leaf) for every element of every
// listed leaf. `loss_fn` must rebuild the graph from the leaves' current
// values and return a scalar.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double step = 1e-5);

}  // namespace depthfuse
