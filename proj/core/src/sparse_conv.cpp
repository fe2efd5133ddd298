#include "depthfuse/sparse_conv.hpp"

#include <algorithm>
#include <memory>

#include "depthfuse/errors.hpp"

namespace depthfuse {

MaskedFeature make_masked_feature(const DepthMap& map) {
    const int h = map.height(), w = map.width();
    if (h < 1 || w < 1) throw ArgumentError("make_masked_feature: empty depth map");
    MaskedFeature mf;
    auto values = map.values();
    mf.features =
        Tensor::from_vector(Shape{1, 1, h, w}, std::vector<double>(values.begin(), values.end()));
    mf.visibility = Grid(h, w);
    auto valid = map.valid();
    for (std::size_t i = 0; i < valid.size(); ++i) mf.visibility.v[i] = valid[i] ? 1.0 : 0.0;
    return mf;
}

SparseWindowStats sparse_window_stats(const Grid& visibility, const ConvSpec& spec) {
    spec.validate();
    const int H = visibility.height, W = visibility.width;
    const int K = spec.kernel, S = spec.stride, P = spec.padding;
    if (H + 2 * P < K || W + 2 * P < K) {
        throw ArgumentError("sparse_conv: kernel larger than padded input");
    }
    const int OH = (H + 2 * P - K) / S + 1;
    const int OW = (W + 2 * P - K) / S + 1;
    const double kernel_area = static_cast<double>(K) * K;

    SparseWindowStats stats{Grid(OH, OW), Grid(OH, OW)};
    for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
            int in_bounds = 0;
            double mass = 0.0, peak = 0.0;
            for (int kh = 0; kh < K; ++kh) {
                const int r = oh * S + kh - P;
                if (r < 0 || r >= H) continue;
                for (int kw = 0; kw < K; ++kw) {
                    const int c = ow * S + kw - P;
                    if (c < 0 || c >= W) continue;
                    ++in_bounds;
                    const double v = visibility.at(r, c);
                    mass += v;
                    peak = std::max(peak, v);
                }
            }
            // Saturated windows reduce to plain convolution exactly; empty
            // windows are silenced entirely (bias included).
            double factor;
            if (mass == 0.0) {
                factor = 0.0;
            } else if (mass == static_cast<double>(in_bounds)) {
                factor = 1.0;
            } else {
                factor = kernel_area / (mass + kSparseConvEps);
            }
            stats.factor.at(oh, ow) = factor;
            stats.out_visibility.at(oh, ow) = peak;
        }
    }
    return stats;
}

MaskedFeature sparse_conv(const MaskedFeature& input, const Tensor& weight, const Tensor& bias,
                          const ConvSpec& spec) {
    if (!input.features.defined()) throw ArgumentError("sparse_conv: empty features");
    const Shape& fs = input.features.shape();
    if (fs.size() != 4 || fs[0] != 1) {
        throw ArgumentError("sparse_conv: features must be [1, C, H, W]");
    }
    if (fs[2] != input.visibility.height || fs[3] != input.visibility.width) {
        throw ArgumentError("sparse_conv: visibility grid does not match feature dims");
    }

    SparseWindowStats stats = sparse_window_stats(input.visibility, spec);

    auto vis_map = std::make_shared<std::vector<double>>(input.visibility.v);
    Tensor masked = mul_channel_map(input.features, vis_map);
    Tensor response = conv2d(masked, weight, bias, spec);
    auto factor_map = std::make_shared<std::vector<double>>(std::move(stats.factor.v));
    MaskedFeature out;
    out.features = mul_channel_map(response, factor_map);
    out.visibility = std::move(stats.out_visibility);
    return out;
}

}  // namespace depthfuse
