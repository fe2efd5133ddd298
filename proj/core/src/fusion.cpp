#include "depthfuse/fusion.hpp"

#include <memory>
#include <vector>

#include "depthfuse/errors.hpp"
#include "depthfuse/ops.hpp"

namespace depthfuse {

DepthMap fuse_depth(const DepthMap& d_stereo, const DepthMap& d_lidar,
                    const ConfidenceMap& m_lidar) {
    if (!d_stereo.same_shape(d_lidar) || d_stereo.height() != m_lidar.height() ||
        d_stereo.width() != m_lidar.width()) {
        throw ArgumentError("fuse_depth: input dimensions do not match");
    }
    DepthMap out(d_stereo.height(), d_stereo.width());
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            const bool sv = d_stereo.valid_at(r, c);
            const bool lv = d_lidar.valid_at(r, c);
            if (sv && lv) {
                const double m = m_lidar.at(r, c);
                out.set(r, c, d_stereo.at(r, c) * (1.0 - m) + d_lidar.at(r, c) * m);
            } else if (sv) {
                out.set(r, c, d_stereo.at(r, c));
            } else if (lv) {
                out.set(r, c, d_lidar.at(r, c));
            }
        }
    }
    return out;
}

Tensor fuse_depth_tensor(const DepthMap& d_stereo, const DepthMap& d_lidar,
                         const Tensor& m_lidar) {
    if (!d_stereo.same_shape(d_lidar)) {
        throw ArgumentError("fuse_depth_tensor: depth dimensions do not match");
    }
    const int h = d_stereo.height(), w = d_stereo.width();
    if (!m_lidar.defined() || m_lidar.shape() != Shape{1, 1, h, w}) {
        throw ArgumentError("fuse_depth_tensor: confidence must be [1, 1, H, W]");
    }
    const std::size_t n = d_stereo.pixel_count();

    auto joint = std::make_shared<std::vector<double>>(n, 0.0);
    std::vector<double> stereo_vals(n, 0.0);
    std::vector<double> lidar_vals(n, 0.0);
    std::vector<double> passthrough(n, 0.0);
    auto sv = d_stereo.values();
    auto lv = d_lidar.values();
    auto svalid = d_stereo.valid();
    auto lvalid = d_lidar.valid();
    for (std::size_t i = 0; i < n; ++i) {
        if (svalid[i] && lvalid[i]) {
            (*joint)[i] = 1.0;
            stereo_vals[i] = sv[i];
            lidar_vals[i] = lv[i];
        } else if (svalid[i]) {
            passthrough[i] = sv[i];
        } else if (lvalid[i]) {
            passthrough[i] = lv[i];
        }
    }

    const Shape shape{1, 1, h, w};
    Tensor stereo = Tensor::from_vector(shape, std::move(stereo_vals));
    Tensor lidar = Tensor::from_vector(shape, std::move(lidar_vals));
    Tensor pass = Tensor::from_vector(shape, std::move(passthrough));

    Tensor m_stereo = sub(Tensor::scalar(1.0), m_lidar);
    Tensor blend = add(mul_pointwise(stereo, m_stereo), mul_pointwise(lidar, m_lidar));
    return add(mul_channel_map(blend, joint), pass);
}

}  // namespace depthfuse
