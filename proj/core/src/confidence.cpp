#include "depthfuse/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthfuse/errors.hpp"

namespace depthfuse {

ConfidenceMap::ConfidenceMap(int height, int width, double fill) {
    if (height < 0 || width < 0) {
        throw ArgumentError("ConfidenceMap dimensions must be non-negative");
    }
    if (!(fill >= 0.0 && fill <= 1.0)) {
        throw ArgumentError("confidence fill value outside [0,1]");
    }
    height_ = height;
    width_ = width;
    values_.assign(static_cast<std::size_t>(height) * width, fill);
}

ConfidenceMap ConfidenceMap::from_values(int height, int width, std::vector<double> values) {
    ConfidenceMap m(height, width);
    if (values.size() != m.values_.size()) {
        throw ArgumentError("confidence value count does not match dimensions");
    }
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ArgumentError("confidence value outside [0,1]");
        }
    }
    m.values_ = std::move(values);
    return m;
}

void ConfidenceMap::set(int r, int c, double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ArgumentError("confidence value outside [0,1]");
    }
    values_[static_cast<std::size_t>(r) * width_ + c] = v;
}

ConfidenceMap make_guiding_confidence(const DepthMap& sparse, const DilationSpec& spec) {
    if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0) {
        throw ArgumentError("dilation kernel size must be odd and >= 1, got " +
                            std::to_string(spec.kernel_size));
    }
    if (!(spec.half_distance > 0.0)) {
        throw ArgumentError("half distance must be positive");
    }

    const int radius = spec.kernel_size / 2;
    const double inv_half_sq = 1.0 / (spec.half_distance * spec.half_distance);

    // Kernel value at offset (dr, dc): exp(-d^2 / (2 sigma^2)) with
    // sigma^2 = half^2 / (2 ln 2), i.e. exactly 2^(-d^2 / half^2).
    Grid kernel(spec.kernel_size, spec.kernel_size);
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            const double d2 = static_cast<double>(dr) * dr + static_cast<double>(dc) * dc;
            kernel.at(dr + radius, dc + radius) = std::exp2(-d2 * inv_half_sq);
        }
    }

    const int h = sparse.height();
    const int w = sparse.width();
    ConfidenceMap out(h, w);
    Grid acc(h, w, 0.0);

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!sparse.valid_at(r, c)) continue;
            const int r0 = std::max(0, r - radius);
            const int r1 = std::min(h - 1, r + radius);
            const int c0 = std::max(0, c - radius);
            const int c1 = std::min(w - 1, c + radius);
            for (int rr = r0; rr <= r1; ++rr) {
                for (int cc = c0; cc <= c1; ++cc) {
                    const double k = kernel.at(rr - r + radius, cc - c + radius);
                    double& slot = acc.at(rr, cc);
                    if (spec.combine == CombineMode::kMax) {
                        slot = std::max(slot, k);
                    } else {
                        slot += k;
                    }
                }
            }
        }
    }

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            out.set(r, c, std::min(1.0, acc.at(r, c)));
        }
    }
    return out;
}

double confidence_loss(const ConfidenceMap& m, const ConfidenceMap& g) {
    if (!m.same_shape(g)) {
        throw ArgumentError("confidence_loss shape mismatch: " + std::to_string(m.height()) + "x" +
                            std::to_string(m.width()) + " vs " + std::to_string(g.height()) + "x" +
                            std::to_string(g.width()));
    }
    if (m.pixel_count() == 0) throw ArgumentError("confidence_loss on empty maps");
    double acc = 0.0;
    auto mv = m.values();
    auto gv = g.values();
    for (std::size_t i = 0; i < mv.size(); ++i) {
        const double d = mv[i] - gv[i];
        acc += d * d;
    }
    return acc / static_cast<double>(mv.size());
}

ConfidenceMap stereo_confidence(const ConfidenceMap& lidar_confidence) {
    ConfidenceMap out(lidar_confidence.height(), lidar_confidence.width());
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            out.set(r, c, 1.0 - lidar_confidence.at(r, c));
        }
    }
    return out;
}

}  // namespace depthfuse
