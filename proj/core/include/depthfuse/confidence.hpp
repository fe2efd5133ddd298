#pragma once

#include <span>
#include <vector>

#include "depthfuse/depth_map.hpp"

namespace depthfuse {

/// H x W per-pixel confidence, every value in [0, 1].
class ConfidenceMap {
public:
    ConfidenceMap() = default;
    ConfidenceMap(int height, int width, double fill = 0.0);

    /// Validates every value is finite and inside [0, 1].
    static ConfidenceMap from_values(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return values_.size(); }
    bool same_shape(const ConfidenceMap& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * width_ + c]; }
    void set(int r, int c, double v);
    std::span<const double> values() const { return values_; }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

/// How overlapping dilation kernels merge.
enum class CombineMode {
    kMax,        ///< pointwise maximum (default; keeps values in [0,1] exactly)
    kSumClamped  ///< accumulate then clamp to 1 (ablation option)
};

/// Gaussian dilation stamp. The variance is derived from half_distance so the
/// kernel value at that distance is exactly 0.5: sigma^2 = d^2 / (2 ln 2).
struct DilationSpec {
    int kernel_size = 3;
    double half_distance = 1.0;
    CombineMode combine = CombineMode::kMax;
};

/// Stamp a Gaussian kernel at every valid pixel of a sparse depth map: value 1
/// at the point itself, falling off with squared distance, truncated at the
/// kernel border and at image borders. Overlaps merge per spec.combine.
ConfidenceMap make_guiding_confidence(const DepthMap& sparse, const DilationSpec& spec = {});

/// Mean over all pixels of the squared difference.
double confidence_loss(const ConfidenceMap& m, const ConfidenceMap& g);

/// Pointwise complement 1 - m.
ConfidenceMap stereo_confidence(const ConfidenceMap& lidar_confidence);

}  // namespace depthfuse
