// Microbenchmarks for the hot paths: dense and sparsity-aware convolution,
// guiding-confidence dilation, fusion, full-pipeline inference, and the
// 16-bit depth PNG codec. One default-scale frame (64x192) is shared.
#include <benchmark/benchmark.h>

#include <utility>
#include <vector>

#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_png.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/ops.hpp"
#include "depthfuse/pipeline.hpp"
#include "depthfuse/rng.hpp"
#include "depthfuse/sparse_conv.hpp"
#include "depthfuse/synth.hpp"

using namespace depthfuse;

namespace {

const SceneSample& frame() {
    static const SceneSample f = gen_scene(1, SynthConfig{});
    return f;
}

Tensor rand_tensor(const Shape& shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_vector(shape, std::move(v));
}

}  // namespace

static void BM_Conv2d(benchmark::State& state) {
    Rng rng(1);
    const ConvSpec spec = ConvSpec::same(8, 8, 3);
    const Tensor x = rand_tensor({1, 8, 64, 192}, rng);
    const Tensor w = rand_tensor({8, 8, 3, 3}, rng);
    const Tensor b = rand_tensor({8}, rng);
    for (auto _ : state) {
        Tensor y = conv2d(x, w, b, spec);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(BM_Conv2d);

static void BM_SparseConv(benchmark::State& state) {
    Rng rng(2);
    const MaskedFeature in = make_masked_feature(frame().d_lidar_sparse);
    const ConvSpec spec = ConvSpec::same(1, 4, 3);
    const Tensor w = rand_tensor({4, 1, 3, 3}, rng);
    const Tensor b = rand_tensor({4}, rng);
    for (auto _ : state) {
        MaskedFeature y = sparse_conv(in, w, b, spec);
        benchmark::DoNotOptimize(y.features.data().data());
    }
}
BENCHMARK(BM_SparseConv);

static void BM_GuidingConfidence(benchmark::State& state) {
    for (auto _ : state) {
        ConfidenceMap m = make_guiding_confidence(frame().d_lidar_sparse, DilationSpec{});
        benchmark::DoNotOptimize(m.values().data());
    }
}
BENCHMARK(BM_GuidingConfidence);

static void BM_FuseDepth(benchmark::State& state) {
    const SceneSample& f = frame();
    std::vector<double> conf(static_cast<std::size_t>(f.image_height) * f.image_width, 0.5);
    const ConfidenceMap m = ConfidenceMap::from_values(f.image_height, f.image_width, conf);
    for (auto _ : state) {
        DepthMap fused = fuse_depth(f.d_stereo, f.d_lidar_sparse, m);
        benchmark::DoNotOptimize(fused.values().data());
    }
}
BENCHMARK(BM_FuseDepth);

static void BM_PipelineInfer(benchmark::State& state) {
    static Pipeline pipeline{PipelineConfig{}, 7};
    for (auto _ : state) {
        InferenceResult out = pipeline.infer(frame());
        benchmark::DoNotOptimize(out.depth.values().data());
    }
}
BENCHMARK(BM_PipelineInfer)->Unit(benchmark::kMillisecond);

static void BM_DepthPngEncode(benchmark::State& state) {
    for (auto _ : state) {
        std::vector<std::uint8_t> bytes = encode_depth_png(frame().d_full);
        benchmark::DoNotOptimize(bytes.data());
    }
}
BENCHMARK(BM_DepthPngEncode);

static void BM_DepthPngDecode(benchmark::State& state) {
    const std::vector<std::uint8_t> bytes = encode_depth_png(frame().d_full);
    for (auto _ : state) {
        DepthMap m = decode_depth_png(bytes);
        benchmark::DoNotOptimize(m.values().data());
    }
}
BENCHMARK(BM_DepthPngDecode);

BENCHMARK_MAIN();
