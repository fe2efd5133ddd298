// Confidence-weighted fusion: the map-level rule, the differentiable
// counterpart, convexity, and the complement partition.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <vector>

#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_map.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/rng.hpp"
#include "depthfuse/tensor.hpp"

using namespace depthfuse;

TEST_CASE("per-pixel rule: blend, pass-through, invalid") {
    DepthMap stereo(2, 2), lidar(2, 2);
    ConfidenceMap m(2, 2);
    stereo.set(0, 0, 10.0);
    lidar.set(0, 0, 20.0);
    m.set(0, 0, 0.25);          // jointly valid: 10*0.75 + 20*0.25 = 12.5
    stereo.set(0, 1, 7.0);      // stereo only: passes through whatever m says
    m.set(0, 1, 0.9);
    lidar.set(1, 0, 3.0);       // lidar only
    m.set(1, 0, 0.1);
    // (1,1) neither valid
    DepthMap f = fuse_depth(stereo, lidar, m);
    CHECK(f.at(0, 0) == doctest::Approx(12.5).epsilon(1e-15));
    CHECK(f.at(0, 1) == 7.0);
    CHECK(f.at(1, 0) == 3.0);
    CHECK_FALSE(f.valid_at(1, 1));
    CHECK(f.at(1, 1) == 0.0);
}

TEST_CASE("degenerate confidences select one modality exactly") {
    DepthMap stereo(1, 1), lidar(1, 1);
    stereo.set(0, 0, 4.0);
    lidar.set(0, 0, 9.0);
    ConfidenceMap all_lidar(1, 1, 1.0);
    ConfidenceMap all_stereo(1, 1, 0.0);
    CHECK(fuse_depth(stereo, lidar, all_lidar).at(0, 0) == 9.0);
    CHECK(fuse_depth(stereo, lidar, all_stereo).at(0, 0) == 4.0);
}

TEST_CASE("convexity: fused depth lies between the inputs on jointly valid pixels") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        const double s = rng.uniform(0.5, 100.0);
        const double l = rng.uniform(0.5, 100.0);
        const double conf = rng.uniform(0.0, 1.0);
        DepthMap stereo(1, 1), lidar(1, 1);
        stereo.set(0, 0, s);
        lidar.set(0, 0, l);
        ConfidenceMap m(1, 1, conf);
        const double f = fuse_depth(stereo, lidar, m).at(0, 0);
        CHECK(f >= std::min(s, l) - 1e-12);
        CHECK(f <= std::max(s, l) + 1e-12);
    }
}

TEST_CASE("modality weights partition unity exactly") {
    Rng rng(32);
    std::vector<double> v(30);
    for (double& x : v) x = rng.uniform(0.0, 1.0);
    ConfidenceMap lidar_conf = ConfidenceMap::from_values(5, 6, v);
    ConfidenceMap stereo_conf = stereo_confidence(lidar_conf);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 6; ++c)
            CHECK(stereo_conf.at(r, c) + lidar_conf.at(r, c) == 1.0);
}

TEST_CASE("tensor fusion equals map fusion where the map rule applies") {
    Rng rng(33);
    DepthMap stereo(4, 6), lidar(4, 6);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) {
            if (rng.bernoulli(0.7)) stereo.set(r, c, rng.uniform(1.0, 50.0));
            if (rng.bernoulli(0.4)) lidar.set(r, c, rng.uniform(1.0, 50.0));
        }
    std::vector<double> mv(24);
    for (double& x : mv) x = rng.uniform(0.0, 1.0);
    ConfidenceMap m = ConfidenceMap::from_values(4, 6, mv);
    Tensor mt = Tensor::from_vector({1, 1, 4, 6}, std::vector<double>(mv));

    DepthMap fm = fuse_depth(stereo, lidar, m);
    Tensor ft = fuse_depth_tensor(stereo, lidar, mt);
    auto fd = ft.data();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) {
            CHECK(fd[r * 6 + c] == doctest::Approx(fm.at(r, c)).epsilon(1e-15));
        }
}

TEST_CASE("tensor fusion gradient: d out / d m = lidar - stereo on jointly valid") {
    DepthMap stereo(1, 3), lidar(1, 3);
    stereo.set(0, 0, 10.0);
    lidar.set(0, 0, 25.0);   // jointly valid
    stereo.set(0, 1, 8.0);   // stereo-only
    // (0,2) lidar-only
    lidar.set(0, 2, 5.0);
    Tensor m = Tensor::from_vector({1, 1, 1, 3}, {0.3, 0.6, 0.9}, true);
    Tensor fused = fuse_depth_tensor(stereo, lidar, m);
    // Weighted sum picks out each pixel's gradient with distinct coefficients.
    Tensor w = Tensor::from_vector({1, 1, 1, 3}, {1.0, 10.0, 100.0});
    Tensor loss = mse_masked(mul_pointwise(fused, w), Tensor::zeros({1, 1, 1, 3}),
                             std::vector<std::uint8_t>{1, 1, 1});
    loss.backward();
    auto g = m.grad();
    // d loss/d fused_i = 2/3 * w_i^2 * fused_i; d fused_0/d m_0 = l - s = 15.
    const double f0 = 10.0 * 0.7 + 25.0 * 0.3;
    CHECK(g[0] == doctest::Approx(2.0 / 3.0 * 1.0 * f0 * 15.0).epsilon(1e-12));
    CHECK(g[1] == 0.0);  // single-modality pixels ignore the confidence
    CHECK(g[2] == 0.0);
}

TEST_CASE("shape mismatches are rejected") {
    DepthMap a(2, 2), b(2, 3);
    ConfidenceMap m(2, 2);
    CHECK_THROWS_AS(fuse_depth(a, b, m), ArgumentError);
    DepthMap c(2, 2);
    ConfidenceMap wrong(3, 2);
    CHECK_THROWS_AS(fuse_depth(a, c, wrong), ArgumentError);
    Tensor mt = Tensor::from_vector({1, 1, 2, 3}, std::vector<double>(6, 0.5));
    CHECK_THROWS_AS(fuse_depth_tensor(a, c, mt), ArgumentError);
}
