#include "depthfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "depthfuse/errors.hpp"

namespace depthfuse {

EvalReport evaluate(const DepthMap& pred, const DepthMap& gt, RowBand band,
                    const std::string& region_name) {
    if (!pred.same_shape(gt)) throw ArgumentError("evaluate: dimension mismatch");
    const int begin = std::max(0, band.begin);
    const int end = std::min(gt.height(), band.end);
    if (begin >= end) throw ArgumentError("evaluate: empty row band");

    constexpr double kThresh1 = 1.25;
    constexpr double kThresh2 = 1.25 * 1.25;
    constexpr double kThresh3 = 1.25 * 1.25 * 1.25;

    std::int64_t n = 0, pass1 = 0, pass2 = 0, pass3 = 0;
    double sum_sq = 0.0, sum_rel = 0.0;
    for (int r = begin; r < end; ++r) {
        for (int c = 0; c < gt.width(); ++c) {
            if (!gt.valid_at(r, c)) continue;
            ++n;
            const double d = gt.at(r, c);
            const double dh = pred.valid_at(r, c) ? pred.at(r, c) : 0.0;
            const double err = dh - d;
            sum_sq += err * err;
            sum_rel += std::abs(err) / d;
            if (dh > 0.0) {
                const double ratio = std::max(dh / d, d / dh);
                pass1 += ratio < kThresh1;
                pass2 += ratio < kThresh2;
                pass3 += ratio < kThresh3;
            }
        }
    }
    if (n == 0) {
        throw ArgumentError("evaluate: no valid groundtruth pixels in region " + region_name);
    }
    const double inv = 1.0 / static_cast<double>(n);
    EvalReport rep;
    rep.region = region_name;
    rep.rmse = std::sqrt(sum_sq * inv);
    rep.rel = sum_rel * inv;
    rep.delta1 = 100.0 * static_cast<double>(pass1) * inv;
    rep.delta2 = 100.0 * static_cast<double>(pass2) * inv;
    rep.delta3 = 100.0 * static_cast<double>(pass3) * inv;
    rep.n_pixels = n;
    return rep;
}

EvalReport evaluate(const DepthMap& pred, const DepthMap& gt) {
    return evaluate(pred, gt, RowBand{0, gt.height()}, "full");
}

CompletenessReport completeness_report(const DepthMap& pred, const DepthMap& full_ref,
                                       int lidar_horizon) {
    if (lidar_horizon <= 0 || lidar_horizon >= full_ref.height()) {
        throw ArgumentError("completeness_report: horizon row outside image");
    }
    CompletenessReport rep;
    rep.upper = evaluate(pred, full_ref, RowBand{0, lidar_horizon}, "upper");
    rep.lower = evaluate(pred, full_ref, RowBand{lidar_horizon, full_ref.height()}, "lower");
    return rep;
}

void EvalAccumulator::add(const EvalReport& r) {
    if (r.n_pixels <= 0) throw ArgumentError("accumulator: report with no pixels");
    const double n = static_cast<double>(r.n_pixels);
    sum_sq_ += n * r.rmse * r.rmse;
    sum_rel_ += n * r.rel;
    sum_d1_ += n * r.delta1;
    sum_d2_ += n * r.delta2;
    sum_d3_ += n * r.delta3;
    n_ += r.n_pixels;
}

EvalReport EvalAccumulator::result(const std::string& region) const {
    if (n_ == 0) throw ArgumentError("accumulator: no reports added");
    const double inv = 1.0 / static_cast<double>(n_);
    EvalReport rep;
    rep.region = region;
    rep.rmse = std::sqrt(sum_sq_ * inv);
    rep.rel = sum_rel_ * inv;
    rep.delta1 = sum_d1_ * inv;
    rep.delta2 = sum_d2_ * inv;
    rep.delta3 = sum_d3_ * inv;
    rep.n_pixels = n_;
    return rep;
}

std::string report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["region"] = r.region;
    j["rmse"] = r.rmse;
    j["rel"] = r.rel;
    j["delta1"] = r.delta1;
    j["delta2"] = r.delta2;
    j["delta3"] = r.delta3;
    j["n_pixels"] = r.n_pixels;
    return j.dump(2);
}

EvalReport report_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad report JSON: ") + e.what());
    }
    EvalReport r;
    try {
        r.region = j.at("region").get<std::string>();
        r.rmse = j.at("rmse").get<double>();
        r.rel = j.at("rel").get<double>();
        r.delta1 = j.at("delta1").get<double>();
        r.delta2 = j.at("delta2").get<double>();
        r.delta3 = j.at("delta3").get<double>();
        r.n_pixels = j.at("n_pixels").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report JSON missing field: ") + e.what());
    }
    return r;
}

std::string report_pretty(const EvalReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "%-5s  rmse %.4f  rel %.4f  d1 %.1f  d2 %.1f  d3 %.1f  (%lld px)",
                  r.region.c_str(), r.rmse, r.rel, r.delta1, r.delta2, r.delta3,
                  static_cast<long long>(r.n_pixels));
    return buf;
}

}  // namespace depthfuse
