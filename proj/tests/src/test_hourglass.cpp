// Stacked hourglass: shape contracts, supervision wiring, dense-connection
// plumbing, and the pass-through initial state.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "depthfuse/depth_map.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/hourglass.hpp"
#include "depthfuse/nn.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/rng.hpp"
#include "depthfuse/tensor.hpp"

using namespace depthfuse;

namespace {

Tensor rand_input(const HourglassConfig& config, int h, int w, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(config.input_channels()) * h * w);
    for (double& x : v) x = rng.uniform(0.5, 30.0);
    return Tensor::from_vector({1, config.input_channels(), h, w}, std::move(v));
}

void zero_heads(ParamStore& store) {
    for (const std::string& name : store.names()) {
        if (name.find("head.conv") == std::string::npos) continue;
        Tensor t = store.get(name);
        auto d = t.mutable_data();
        std::fill(d.begin(), d.end(), 0.0);
    }
}

}  // namespace

TEST_CASE("forward shape contract across geometry and ablations") {
    Rng rng(51);
    for (int stages = 1; stages <= 3; ++stages)
        for (int levels = 1; levels <= 2; ++levels)
            for (bool dense : {false, true})
                for (bool conf : {false, true}) {
                    HourglassConfig config;
                    config.stages = stages;
                    config.levels = levels;
                    config.base_channels = 4;
                    config.dense_connections = dense;
                    config.with_confidence_input = conf;
                    ParamStore store;
                    HourglassNet net(store, config, rng);
                    const int h = config.downsample_multiple() * 3;
                    const int w = config.downsample_multiple() * 5;
                    Tensor x = rand_input(config, h, w, rng);
                    auto outs = net.forward(x, Mode::kTrain);
                    REQUIRE(static_cast<int>(outs.size()) == stages);
                    for (const Tensor& o : outs) CHECK(o.shape() == Shape{1, 1, h, w});
                }
}

TEST_CASE("input dims must divide the downsample multiple") {
    Rng rng(52);
    HourglassConfig config;
    config.stages = 1;
    config.levels = 2;
    config.base_channels = 4;
    ParamStore store;
    HourglassNet net(store, config, rng);
    std::vector<double> v(static_cast<std::size_t>(2) * 6 * 8, 1.0);
    Tensor bad = Tensor::from_vector({1, 2, 6, 8}, std::move(v));  // 6 % 4 != 0
    CHECK_THROWS_AS(net.forward(bad, Mode::kEval), ArgumentError);
}

TEST_CASE("zeroed output heads force every stage to emit exactly zero") {
    Rng rng(53);
    HourglassConfig config;
    config.stages = 3;
    config.levels = 2;
    config.base_channels = 8;
    ParamStore store;
    HourglassNet net(store, config, rng);
    zero_heads(store);
    Tensor x = rand_input(config, 16, 16, rng);
    for (const Tensor& o : net.forward(x, Mode::kTrain))
        for (double v : o.data()) CHECK(v == 0.0);
}

TEST_CASE("head wiring: the depth input channel sits at flat index base_channels") {
    // Init contract: each head starts with unit weight on the depth channel
    // so the untrained stage is anchored to its input. Zeroing every other
    // head weight must then reproduce the depth channel exactly, which pins
    // the concat layout [decoder features..., network input...].
    Rng rng(54);
    HourglassConfig config;
    config.stages = 2;
    config.levels = 1;
    config.base_channels = 4;
    ParamStore store;
    HourglassNet net(store, config, rng);
    const int cb = config.base_channels;
    for (int s = 0; s < config.stages; ++s) {
        Tensor w = store.get("hg.stage" + std::to_string(s) + ".head.conv.weight");
        CHECK(w.data()[cb] == 1.0);  // set by construction
        auto d = w.mutable_data();
        for (std::size_t i = 0; i < d.size(); ++i)
            if (i != static_cast<std::size_t>(cb)) d[i] = 0.0;
    }
    Tensor x = rand_input(config, 8, 12, rng);
    auto outs = net.forward(x, Mode::kTrain);
    auto xd = x.data();  // channel 0 is the depth plane
    for (const Tensor& o : outs) {
        auto od = o.data();
        for (std::size_t i = 0; i < od.size(); ++i) CHECK(od[i] == xd[i]);
    }
}

TEST_CASE("stage losses: mse against groundtruth-valid pixels per stage") {
    // Build constant offsets by zeroing heads and biasing them: stage i
    // predicts gt + (i+1), so losses must be 1, 4, 9.
    Rng rng(55);
    HourglassConfig config;
    config.stages = 3;
    config.levels = 1;
    config.base_channels = 4;
    ParamStore store;
    HourglassNet net(store, config, rng);
    zero_heads(store);

    const int h = 8, w = 8;
    DepthMap gt(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if ((r + c) % 2 == 0) gt.set(r, c, 5.0);
    for (int i = 0; i < 3; ++i) {
        Tensor bias = store.get("hg.stage" + std::to_string(i) + ".head.conv.bias");
        bias.mutable_data()[0] = 5.0 + (i + 1);
    }
    Tensor x = rand_input(config, h, w, rng);
    auto outs = net.forward(x, Mode::kTrain);
    auto losses = stage_losses(outs, gt);
    REQUIRE(losses.size() == 3);
    CHECK(losses[0].item() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(losses[1].item() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(losses[2].item() == doctest::Approx(9.0).epsilon(1e-12));

    Tensor total = total_loss(losses, Tensor::scalar(4.0));
    CHECK(total.item() == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("total loss backward reaches every stage's parameters") {
    Rng rng(56);
    HourglassConfig config;
    config.stages = 2;
    config.levels = 1;
    config.base_channels = 4;
    ParamStore store;
    HourglassNet net(store, config, rng);
    DepthMap gt(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) gt.set(r, c, 3.0);
    Tensor x = rand_input(config, 8, 8, rng);
    auto outs = net.forward(x, Mode::kTrain);
    Tensor total = total_loss(stage_losses(outs, gt), Tensor::scalar(0.0));
    total.backward();
    for (const std::string& name : {std::string("hg.stage0.entry.conv.weight"),
                                    std::string("hg.stage1.entry.conv.weight"),
                                    std::string("hg.stage0.head.conv.weight"),
                                    std::string("hg.stage1.head.conv.weight")}) {
        Tensor p = store.get(name);
        REQUIRE(p.has_grad());
        double mag = 0.0;
        for (double g : p.grad()) mag += std::abs(g);
        CHECK(mag > 0.0);
    }
}

TEST_CASE("parameter names cover the declared architecture") {
    Rng rng(57);
    HourglassConfig config;
    config.stages = 2;
    config.levels = 2;
    config.base_channels = 4;
    config.dense_connections = true;
    ParamStore store;
    HourglassNet net(store, config, rng);
    std::set<std::string> names;
    for (const std::string& n : store.names()) names.insert(n);

    for (int s = 0; s < 2; ++s) {
        const std::string p = "hg.stage" + std::to_string(s) + ".";
        CHECK(names.count(p + "entry.conv.weight"));
        CHECK(names.count(p + "entry.bn.gamma"));
        CHECK(names.count(p + "enc1.conv.weight"));
        CHECK(names.count(p + "enc2.conv.weight"));
        CHECK(names.count(p + "dec1.conv.weight"));
        CHECK(names.count(p + "dec0.conv.weight"));
        CHECK(names.count(p + "head.conv.weight"));
        CHECK(names.count(p + "head.conv.bias"));
    }
    // Dense merges exist only from stage 1 on: one per resolution position.
    CHECK_FALSE(names.count("hg.stage0.merge0.conv.weight"));
    for (int pos = 0; pos <= 4; ++pos)
        CHECK(names.count("hg.stage1.merge" + std::to_string(pos) + ".conv.weight"));

    // Ablated dense connections register no merge blocks at all.
    HourglassConfig lean = config;
    lean.dense_connections = false;
    ParamStore lean_store;
    HourglassNet lean_net(lean_store, lean, rng);
    for (const std::string& n : lean_store.names())
        CHECK(n.find(".merge") == std::string::npos);
}

TEST_CASE("later stages consume earlier stage outputs") {
    // Perturbing stage 0's head bias must change stage 1's output even with
    // stage 1's own parameters fixed.
    Rng rng(58);
    HourglassConfig config;
    config.stages = 2;
    config.levels = 1;
    config.base_channels = 4;
    ParamStore store;
    HourglassNet net(store, config, rng);
    Tensor x = rand_input(config, 8, 8, rng);
    Tensor before = net.forward(x, Mode::kEval)[1];
    Tensor b0 = store.get("hg.stage0.head.conv.bias");
    b0.mutable_data()[0] += 1.5;
    Tensor after = net.forward(x, Mode::kEval)[1];
    double diff = 0.0;
    auto bd = before.data();
    auto ad = after.data();
    for (std::size_t i = 0; i < bd.size(); ++i) diff += std::abs(ad[i] - bd[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("config validation") {
    HourglassConfig bad;
    bad.stages = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = HourglassConfig{};
    bad.levels = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = HourglassConfig{};
    bad.base_channels = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
}
