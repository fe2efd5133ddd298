#include "depthfuse/confidence_net.hpp"

#include "depthfuse/errors.hpp"

namespace depthfuse {

void ApcConfig::validate() const {
    if (widths.empty()) throw ArgumentError("confidence net needs at least one block");
    if (kernels.size() != widths.size()) {
        throw ArgumentError("confidence net: kernels and widths must have equal length");
    }
    for (int w : widths) {
        if (w < 1) throw ArgumentError("confidence net: block width must be >= 1");
    }
    for (int k : kernels) {
        if (k < 1 || k % 2 == 0) throw ArgumentError("confidence net: kernels must be odd");
    }
    if (head_kernel < 1 || head_kernel % 2 == 0) {
        throw ArgumentError("confidence net: head kernel must be odd");
    }
}

ConfidenceNet::ConfidenceNet(ParamStore& store, const ApcConfig& config, Rng& rng)
    : config_(config) {
    config_.validate();
    int in_ch = 1;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        const std::string prefix = "apc.block" + std::to_string(i);
        const ConvSpec spec = ConvSpec::same(in_ch, config_.widths[i], config_.kernels[i]);
        convs_.emplace_back(store, prefix + ".conv", spec, rng);
        norms_.emplace_back(store, prefix + ".bn", config_.widths[i]);
        in_ch = config_.widths[i];
    }
    head_ = Conv2d(store, "apc.head.conv", ConvSpec::same(in_ch, 1, config_.head_kernel), rng);
}

Tensor ConfidenceNet::forward(const MaskedFeature& input, Mode mode) {
    MaskedFeature h = input;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = sparse_conv(h, convs_[i].weight, convs_[i].bias, convs_[i].spec);
        h.features = relu(norms_[i](h.features, mode));
    }
    MaskedFeature out = sparse_conv(h, head_.weight, head_.bias, head_.spec);
    return sigmoid(out.features);
}

ConfidenceMap ConfidenceNet::infer(const DepthMap& d_lidar_sparse) {
    Tensor conf = forward(make_masked_feature(d_lidar_sparse), Mode::kEval);
    auto v = conf.data();
    return ConfidenceMap::from_values(d_lidar_sparse.height(), d_lidar_sparse.width(),
                                      std::vector<double>(v.begin(), v.end()));
}

}  // namespace depthfuse
