// Depth error metrics: hand-computed cases, threshold strictness,
// monotonicity, region splits, and the JSON/pretty serializations.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "depthfuse/depth_map.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/rng.hpp"

using namespace depthfuse;

namespace {

DepthMap constant_map(int h, int w, double v) {
    DepthMap m(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) m.set(r, c, v);
    return m;
}

DepthMap random_map(int h, int w, Rng& rng, double lo, double hi, double keep = 1.0) {
    DepthMap m(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (rng.bernoulli(keep)) m.set(r, c, rng.uniform(lo, hi));
    return m;
}

}  // namespace

TEST_CASE("hand case: pred 1.3 vs gt 1.0 everywhere") {
    DepthMap pred = constant_map(2, 3, 1.3);
    DepthMap gt = constant_map(2, 3, 1.0);
    EvalReport r = evaluate(pred, gt);
    CHECK(r.rmse == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(r.rel == doctest::Approx(0.3).epsilon(1e-12));
    // ratio 1.3 > 1.25 fails delta1, passes delta2 (1.5625) and delta3.
    CHECK(r.delta1 == 0.0);
    CHECK(r.delta2 == 100.0);
    CHECK(r.delta3 == 100.0);
    CHECK(r.n_pixels == 6);
    CHECK(r.region == "full");
}

TEST_CASE("perfect prediction scores perfectly") {
    Rng rng(61);
    DepthMap gt = random_map(5, 7, rng, 1.0, 60.0, 0.8);
    EvalReport r = evaluate(gt, gt);
    CHECK(r.rmse == 0.0);
    CHECK(r.rel == 0.0);
    CHECK(r.delta1 == 100.0);
    CHECK(r.delta2 == 100.0);
    CHECK(r.delta3 == 100.0);
    CHECK(r.n_pixels == static_cast<std::int64_t>(gt.valid_count()));
}

TEST_CASE("delta thresholds are strict: a pixel at exactly 1.25 fails delta1") {
    DepthMap pred = constant_map(1, 1, 1.25);
    DepthMap gt = constant_map(1, 1, 1.0);
    EvalReport r = evaluate(pred, gt);
    CHECK(r.delta1 == 0.0);
    CHECK(r.delta2 == 100.0);
    // Just inside passes.
    DepthMap inside = constant_map(1, 1, 1.2499999);
    CHECK(evaluate(inside, gt).delta1 == 100.0);
    // The ratio is symmetric: gt/pred counts too.
    DepthMap under = constant_map(1, 1, 1.0 / 1.3);
    CHECK(evaluate(under, gt).delta1 == 0.0);
    CHECK(evaluate(under, gt).delta2 == 100.0);
}

TEST_CASE("prediction invalid at a valid gt pixel scores as depth 0") {
    DepthMap pred(1, 2);
    pred.set(0, 0, 2.0);  // (0,1) left invalid
    DepthMap gt = constant_map(1, 2, 2.0);
    EvalReport r = evaluate(pred, gt);
    // Errors: 0 and 2 -> rmse sqrt(4/2), rel (0 + 1)/2, deltas 50%.
    CHECK(r.rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.rel == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.delta1 == 50.0);
    CHECK(r.delta3 == 50.0);
    CHECK(r.n_pixels == 2);
}

TEST_CASE("gt-invalid pixels are excluded entirely") {
    DepthMap pred = constant_map(1, 2, 99.0);
    DepthMap gt(1, 2);
    gt.set(0, 0, 99.0);
    EvalReport r = evaluate(pred, gt);
    CHECK(r.n_pixels == 1);
    CHECK(r.rmse == 0.0);
    // A region with no valid groundtruth has no defined score.
    DepthMap empty_gt(1, 2);
    CHECK_THROWS_AS(evaluate(pred, empty_gt), ArgumentError);
}

TEST_CASE("delta metrics are monotone in the threshold on random maps") {
    Rng rng(62);
    for (int trial = 0; trial < 1000; ++trial) {
        DepthMap gt = random_map(4, 5, rng, 0.5, 80.0, 0.9);
        DepthMap pred = random_map(4, 5, rng, 0.5, 80.0, 0.9);
        EvalReport r = evaluate(pred, gt);
        CHECK(r.delta1 <= r.delta2);
        CHECK(r.delta2 <= r.delta3);
        CHECK(r.delta3 <= 100.0);
        CHECK(r.delta1 >= 0.0);
        CHECK(r.rmse >= 0.0);
    }
}

TEST_CASE("row band restricts the evaluated region") {
    DepthMap pred(4, 2), gt(4, 2);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 2; ++c) {
            gt.set(r, c, 10.0);
            pred.set(r, c, r < 2 ? 10.0 : 20.0);  // perfect above, off below
        }
    EvalReport top = evaluate(pred, gt, RowBand{0, 2}, "top");
    EvalReport bottom = evaluate(pred, gt, RowBand{2, 4}, "bottom");
    CHECK(top.region == "top");
    CHECK(top.rmse == 0.0);
    CHECK(top.n_pixels == 4);
    CHECK(bottom.rmse == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(bottom.n_pixels == 4);
}

TEST_CASE("completeness report splits at the lidar horizon") {
    const int horizon = 2;
    DepthMap full = constant_map(4, 3, 8.0);
    DepthMap pred(4, 3);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) pred.set(r, c, r < horizon ? 8.0 : 4.0);
    CompletenessReport cr = completeness_report(pred, full, horizon);
    CHECK(cr.upper.region == "upper");
    CHECK(cr.lower.region == "lower");
    CHECK(cr.upper.n_pixels == 6);
    CHECK(cr.lower.n_pixels == 6);
    CHECK(cr.upper.rmse == 0.0);
    CHECK(cr.lower.rmse == doctest::Approx(4.0).epsilon(1e-12));
    // The two regions partition the frame.
    CHECK(cr.upper.n_pixels + cr.lower.n_pixels ==
          static_cast<std::int64_t>(full.pixel_count()));
}

TEST_CASE("accumulator equals a pixel-weighted recompute over concatenated frames") {
    Rng rng(63);
    // Build two frames of different sizes, accumulate their reports, and
    // compare with evaluating one map holding all pixels side by side.
    DepthMap gt1 = random_map(3, 4, rng, 1.0, 30.0);
    DepthMap pred1 = random_map(3, 4, rng, 1.0, 30.0);
    DepthMap gt2 = random_map(2, 9, rng, 1.0, 30.0);
    DepthMap pred2 = random_map(2, 9, rng, 1.0, 30.0);

    EvalAccumulator acc;
    CHECK(acc.empty());
    acc.add(evaluate(pred1, gt1));
    acc.add(evaluate(pred2, gt2));
    CHECK_FALSE(acc.empty());
    EvalReport combined = acc.result("both");

    DepthMap gt_all(1, 30), pred_all(1, 30);
    int i = 0;
    auto append = [&](const DepthMap& g, const DepthMap& p) {
        for (int r = 0; r < g.height(); ++r)
            for (int c = 0; c < g.width(); ++c, ++i) {
                gt_all.set(0, i, g.at(r, c));
                pred_all.set(0, i, p.at(r, c));
            }
    };
    append(gt1, pred1);
    append(gt2, pred2);
    EvalReport direct = evaluate(pred_all, gt_all);

    CHECK(combined.region == "both");
    CHECK(combined.n_pixels == direct.n_pixels);
    CHECK(combined.rmse == doctest::Approx(direct.rmse).epsilon(1e-12));
    CHECK(combined.rel == doctest::Approx(direct.rel).epsilon(1e-12));
    CHECK(combined.delta1 == doctest::Approx(direct.delta1).epsilon(1e-12));
    CHECK(combined.delta2 == doctest::Approx(direct.delta2).epsilon(1e-12));
    CHECK(combined.delta3 == doctest::Approx(direct.delta3).epsilon(1e-12));
}

TEST_CASE("json round trip preserves full precision") {
    EvalReport r;
    r.region = "upper";
    r.rmse = 1.0096437823451234;
    r.rel = 0.022634598712345;
    r.delta1 = 99.54321;
    r.delta2 = 99.9;
    r.delta3 = 100.0;
    r.n_pixels = 1234567;
    EvalReport back = report_from_json(report_json(r));
    CHECK(back.region == r.region);
    CHECK(back.rmse == r.rmse);
    CHECK(back.rel == r.rel);
    CHECK(back.delta1 == r.delta1);
    CHECK(back.delta2 == r.delta2);
    CHECK(back.delta3 == r.delta3);
    CHECK(back.n_pixels == r.n_pixels);

    CHECK_THROWS_AS(report_from_json("not json"), FormatError);
    CHECK_THROWS_AS(report_from_json("{\"region\": \"x\"}"), FormatError);
}

TEST_CASE("pretty line renders the reference-style row") {
    // Display fixture in the conventional benchmark format; checks rounding
    // and column order, not any computation.
    EvalReport r;
    r.region = "full";
    r.rmse = 1.0096;
    r.rel = 0.0226;
    r.delta1 = 99.5;
    r.delta2 = 99.9;
    r.delta3 = 100.0;
    r.n_pixels = 100;
    const std::string line = report_pretty(r);
    CHECK(line.find("1.0096") != std::string::npos);
    CHECK(line.find("0.0226") != std::string::npos);
    CHECK(line.find("99.5") != std::string::npos);
    CHECK(line.find("99.9") != std::string::npos);
    CHECK(line.find("100.0") != std::string::npos);
    CHECK(line.find("full") != std::string::npos);

    // Rounding to the declared display precision.
    EvalReport q;
    q.rmse = 2.71828;
    q.rel = 0.333333;
    q.delta1 = 98.765;
    const std::string ql = report_pretty(q);
    CHECK(ql.find("2.7183") != std::string::npos);
    CHECK(ql.find("0.3333") != std::string::npos);
    CHECK(ql.find("98.8") != std::string::npos);
}

TEST_CASE("shape mismatch between pred and gt is rejected") {
    DepthMap a(2, 2), b(2, 3);
    CHECK_THROWS_AS(evaluate(a, b), ArgumentError);
}
