#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace depthfuse {

/// Plain H x W scalar field (disparities, kernels, masks). No validity
/// semantics; just indexed storage.
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0)
        : height(h), width(w), v(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * width + c]; }
    std::size_t size() const { return v.size(); }
};

/// Dense H x W depth image in meters plus a validity mask.
///
/// Invariant maintained by every mutator: valid pixels hold strictly positive
/// finite depth, invalid pixels hold exactly 0.
class DepthMap {
public:
    DepthMap() = default;
    DepthMap(int height, int width);

    /// Validity inferred per pixel: value > 0 is valid, value == 0 invalid.
    /// Negative or non-finite values throw ArgumentError.
    static DepthMap from_values(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return values_.size(); }
    bool same_shape(const DepthMap& o) const { return height_ == o.height_ && width_ == o.width_; }

    double at(int r, int c) const { return values_[index(r, c)]; }
    bool valid_at(int r, int c) const { return valid_[index(r, c)] != 0; }

    /// Set depth at a pixel. depth_m == 0 clears the pixel; depth_m > 0 marks
    /// it valid. Negative or non-finite throws ArgumentError.
    void set(int r, int c, double depth_m);
    void clear(int r, int c);

    std::span<const double> values() const { return values_; }
    std::span<const std::uint8_t> valid() const { return valid_; }
    std::size_t valid_count() const;

private:
    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width_ + c; }

    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> valid_;
};

/// Stereo rig intrinsics needed to turn disparities into metric depth.
struct CameraRig {
    double focal_px = 0.0;
    double baseline_m = 0.0;
};

struct CropSpec {
    int target_height = 0;
    int target_width = 0;
};

/// Half-open row range [begin, end).
struct RowBand {
    int begin = 0;
    int end = 0;
};

/// depth = focal * baseline / disparity; zero disparity maps to an invalid pixel.
DepthMap disparity_to_depth(const Grid& disparity, const CameraRig& rig);

/// Keep the bottom target_height rows and a width-centered window of
/// target_width columns. Odd column excess discards the extra column on the
/// right, so the kept window is biased left. Pure selection, no resampling.
DepthMap bottom_crop(const DepthMap& map, const CropSpec& spec);

/// Fraction of valid pixels per horizontal bin inside the given row band,
/// averaged over the collection. Bins split the width evenly (default thirds:
/// left, center, right).
std::vector<double> scanline_density_stats(std::span<const DepthMap> maps, RowBand band,
                                           int bins = 3);

}  // namespace depthfuse
