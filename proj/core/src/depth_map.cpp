#include "depthfuse/depth_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "depthfuse/errors.hpp"

namespace depthfuse {

DepthMap::DepthMap(int height, int width) {
    if (height < 0 || width < 0) {
        throw ArgumentError("DepthMap dimensions must be non-negative, got " +
                            std::to_string(height) + "x" + std::to_string(width));
    }
    height_ = height;
    width_ = width;
    values_.assign(static_cast<std::size_t>(height) * width, 0.0);
    valid_.assign(values_.size(), 0);
}

DepthMap DepthMap::from_values(int height, int width, std::vector<double> values) {
    DepthMap m(height, width);
    if (values.size() != m.values_.size()) {
        throw ArgumentError("value count " + std::to_string(values.size()) +
                            " does not match " + std::to_string(height) + "x" +
                            std::to_string(width));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]) || values[i] < 0.0) {
            throw ArgumentError("depth values must be finite and non-negative");
        }
        m.valid_[i] = values[i] > 0.0 ? 1 : 0;
    }
    m.values_ = std::move(values);
    return m;
}

void DepthMap::set(int r, int c, double depth_m) {
    if (!std::isfinite(depth_m) || depth_m < 0.0) {
        throw ArgumentError("depth must be finite and non-negative");
    }
    const std::size_t i = index(r, c);
    values_[i] = depth_m;
    valid_[i] = depth_m > 0.0 ? 1 : 0;
}

void DepthMap::clear(int r, int c) {
    const std::size_t i = index(r, c);
    values_[i] = 0.0;
    valid_[i] = 0;
}

std::size_t DepthMap::valid_count() const {
    return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

DepthMap disparity_to_depth(const Grid& disparity, const CameraRig& rig) {
    if (rig.focal_px <= 0.0 || rig.baseline_m <= 0.0) {
        throw ArgumentError("camera rig needs positive focal length and baseline");
    }
    if (static_cast<std::size_t>(disparity.height) * disparity.width != disparity.v.size()) {
        throw ArgumentError("disparity grid storage does not match its dimensions");
    }
    DepthMap out(disparity.height, disparity.width);
    const double fb = rig.focal_px * rig.baseline_m;
    for (int r = 0; r < disparity.height; ++r) {
        for (int c = 0; c < disparity.width; ++c) {
            const double d = disparity.at(r, c);
            if (!std::isfinite(d) || d < 0.0) {
                throw ArgumentError("disparities must be finite and non-negative");
            }
            if (d > 0.0) out.set(r, c, fb / d);
        }
    }
    return out;
}

DepthMap bottom_crop(const DepthMap& map, const CropSpec& spec) {
    if (spec.target_height <= 0 || spec.target_width <= 0) {
        throw ArgumentError("crop target must be positive");
    }
    if (spec.target_height > map.height() || spec.target_width > map.width()) {
        throw ArgumentError("crop " + std::to_string(spec.target_height) + "x" +
                            std::to_string(spec.target_width) + " exceeds source " +
                            std::to_string(map.height()) + "x" + std::to_string(map.width()));
    }
    const int row0 = map.height() - spec.target_height;
    const int col0 = (map.width() - spec.target_width) / 2;
    DepthMap out(spec.target_height, spec.target_width);
    for (int r = 0; r < spec.target_height; ++r) {
        for (int c = 0; c < spec.target_width; ++c) {
            if (map.valid_at(row0 + r, col0 + c)) {
                out.set(r, c, map.at(row0 + r, col0 + c));
            }
        }
    }
    return out;
}

std::vector<double> scanline_density_stats(std::span<const DepthMap> maps, RowBand band,
                                           int bins) {
    if (maps.empty()) throw ArgumentError("scanline_density_stats needs at least one map");
    if (bins < 1) throw ArgumentError("bin count must be >= 1");

    std::vector<double> acc(static_cast<std::size_t>(bins), 0.0);
    for (const DepthMap& m : maps) {
        const int r0 = std::max(0, band.begin);
        const int r1 = std::min(m.height(), band.end);
        if (r0 >= r1) throw ArgumentError("row band selects no rows");
        if (m.width() < bins) throw ArgumentError("map narrower than bin count");

        for (int b = 0; b < bins; ++b) {
            const int c0 = static_cast<int>(static_cast<std::int64_t>(m.width()) * b / bins);
            const int c1 = static_cast<int>(static_cast<std::int64_t>(m.width()) * (b + 1) / bins);
            std::int64_t valid = 0;
            for (int r = r0; r < r1; ++r) {
                for (int c = c0; c < c1; ++c) {
                    if (m.valid_at(r, c)) ++valid;
                }
            }
            const std::int64_t total = static_cast<std::int64_t>(r1 - r0) * (c1 - c0);
            acc[static_cast<std::size_t>(b)] += static_cast<double>(valid) / static_cast<double>(total);
        }
    }
    for (double& a : acc) a /= static_cast<double>(maps.size());
    return acc;
}

}  // namespace depthfuse
