#pragma once

#include <cstdint>
#include <string>

#include "depthfuse/depth_map.hpp"

namespace depthfuse {

/// Error metrics over one region of one or more frames. Deltas are
/// percentages in [0, 100].
struct EvalReport {
    std::string region = "full";
    double rmse = 0.0;
    double rel = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    std::int64_t n_pixels = 0;
};

/// Metrics over groundtruth-valid pixels within [band.begin, band.end).
/// A prediction invalid at a valid groundtruth pixel is scored as depth 0 and
/// fails every delta threshold, so sparse outputs cannot inflate scores.
/// The ratio thresholds are strict: a pixel at exactly 1.25^i fails delta_i.
EvalReport evaluate(const DepthMap& pred, const DepthMap& gt, RowBand band,
                    const std::string& region_name);

/// Full-image evaluation.
EvalReport evaluate(const DepthMap& pred, const DepthMap& gt);

struct CompletenessReport {
    EvalReport lower;
    EvalReport upper;
};

/// Splits the image at the lidar horizon row and evaluates the two halves
/// separately against a dense reference: rows [0, horizon) are "upper" (never
/// scanned by lidar), rows [horizon, H) are "lower".
CompletenessReport completeness_report(const DepthMap& pred, const DepthMap& full_ref,
                                       int lidar_horizon);

/// Pixel-weighted combination of per-frame reports for one region.
class EvalAccumulator {
public:
    void add(const EvalReport& r);
    bool empty() const { return n_ == 0; }
    EvalReport result(const std::string& region) const;

private:
    double sum_sq_ = 0.0;   // n * rmse^2 accumulated
    double sum_rel_ = 0.0;  // n * rel
    double sum_d1_ = 0.0, sum_d2_ = 0.0, sum_d3_ = 0.0;
    std::int64_t n_ = 0;
};

/// Machine form, full precision: {"region", "rmse", "rel", "delta1",
/// "delta2", "delta3", "n_pixels"}.
std::string report_json(const EvalReport& r);
EvalReport report_from_json(const std::string& json_text);

/// One-line human form with conventional rounding (rmse/rel to 4 decimals,
/// deltas to 1).
std::string report_pretty(const EvalReport& r);

}  // namespace depthfuse
