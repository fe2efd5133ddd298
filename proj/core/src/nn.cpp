#include "depthfuse/nn.hpp"

#include <algorithm>
#include <cmath>

#include "depthfuse/errors.hpp"

namespace depthfuse {

Tensor& ParamStore::add(const std::string& name, Tensor param) {
    if (has(name)) throw ArgumentError("duplicate parameter name: " + name);
    if (!param.defined()) throw ArgumentError("parameter " + name + " is empty");
    param.node()->requires_grad = true;
    order_.push_back(name);
    params_.emplace_back(name, std::move(param));
    return params_.back().second;
}

void ParamStore::add_buffer(const std::string& name,
                            std::shared_ptr<std::vector<double>> buffer) {
    for (const auto& [n, _] : buffers_) {
        if (n == name) throw ArgumentError("duplicate buffer name: " + name);
    }
    if (!buffer) throw ArgumentError("buffer " + name + " is null");
    buffer_order_.push_back(name);
    buffers_.emplace_back(name, std::move(buffer));
}

bool ParamStore::has(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(),
                       [&](const auto& p) { return p.first == name; });
}

Tensor& ParamStore::get(const std::string& name) {
    for (auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw ArgumentError("unknown parameter: " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : params_) {
        if (n == name) return t;
    }
    throw ArgumentError("unknown parameter: " + name);
}

std::vector<double>& ParamStore::buffer(const std::string& name) {
    for (auto& [n, b] : buffers_) {
        if (n == name) return *b;
    }
    throw ArgumentError("unknown buffer: " + name);
}

const std::vector<double>& ParamStore::buffer(const std::string& name) const {
    for (const auto& [n, b] : buffers_) {
        if (n == name) return *b;
    }
    throw ArgumentError("unknown buffer: " + name);
}

std::vector<Tensor*> ParamStore::params() {
    std::vector<Tensor*> out;
    out.reserve(params_.size());
    for (auto& [_, t] : params_) out.push_back(&t);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

Tensor init_conv_weight(const ConvSpec& spec, Rng& rng) {
    spec.validate();
    const int fan_in = spec.in_channels * spec.kernel * spec.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    const std::size_t n = static_cast<std::size_t>(spec.out_channels) * spec.in_channels *
                          spec.kernel * spec.kernel;
    std::vector<double> w(n);
    for (double& v : w) v = rng.uniform(-bound, bound);
    return Tensor::from_vector(Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                               std::move(w));
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, const ConvSpec& cs, Rng& rng)
    : spec(cs),
      weight(store.add(prefix + ".weight", init_conv_weight(cs, rng))),
      bias(store.add(prefix + ".bias", Tensor::zeros(Shape{cs.out_channels}))) {}

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& prefix, int channels)
    : gamma(store.add(prefix + ".gamma", Tensor::full(Shape{channels}, 1.0))),
      beta(store.add(prefix + ".beta", Tensor::zeros(Shape{channels}))),
      state(BatchNormState::create(channels)) {
    store.add_buffer(prefix + ".running_mean", state.running_mean);
    store.add_buffer(prefix + ".running_var", state.running_var);
}

Sgd::Sgd(std::vector<Tensor*> params, double lr, double momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (lr < 0.0 || !std::isfinite(lr)) throw ArgumentError("sgd: bad learning rate");
    if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("sgd: momentum must be in [0,1)");
    velocity_.reserve(params_.size());
    for (Tensor* p : params_) {
        if (!p || !p->defined()) throw ArgumentError("sgd: empty parameter");
        velocity_.emplace_back(p->size(), 0.0);
    }
}

void Sgd::step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k];
        if (!p.has_grad()) continue;  // parameter unused in this graph
        auto g = p.grad();
        auto v = p.mutable_data();
        auto& vel = velocity_[k];
        for (std::size_t i = 0; i < v.size(); ++i) {
            vel[i] = momentum_ * vel[i] + g[i];
            v[i] -= lr_ * vel[i];
        }
        check_finite(v, "sgd: parameter update");
    }
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& leaves,
                           double step) {
    for (const auto& [name, leaf] : leaves) {
        if (!leaf.defined()) throw ArgumentError("grad_check: leaf " + name + " is empty");
        if (!leaf.node()->requires_grad) {
            throw ArgumentError("grad_check: leaf " + name + " does not require grad");
        }
    }

    Tensor loss = loss_fn();
    for (const auto& [_, leaf] : leaves) leaf.node()->grad.assign(leaf.size(), 0.0);
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& [_, leaf] : leaves) {
        auto g = leaf.grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    GradCheckResult result;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        Tensor leaf = leaves[k].second;
        auto values = leaf.mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = loss_fn().item();
            values[i] = saved - step;
            const double down = loss_fn().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = leaves[k].first;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace depthfuse
