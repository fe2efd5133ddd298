#include "depthfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "depthfuse/checkpoint.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/ops.hpp"

namespace depthfuse {

DepthMap pad_to_multiple(const DepthMap& map, int multiple, bool replicate) {
    if (multiple < 1) throw ArgumentError("pad_to_multiple: multiple must be >= 1");
    const int h = map.height(), w = map.width();
    const int h2 = (h + multiple - 1) / multiple * multiple;
    const int w2 = (w + multiple - 1) / multiple * multiple;
    if (h2 == h && w2 == w) return map;
    DepthMap out(h2, w2);
    for (int r = 0; r < h2; ++r) {
        const int sr = std::min(r, h - 1);
        for (int c = 0; c < w2; ++c) {
            const int sc = std::min(c, w - 1);
            if (r < h && c < w) {
                if (map.valid_at(r, c)) out.set(r, c, map.at(r, c));
            } else if (replicate) {
                if (map.valid_at(sr, sc)) out.set(r, c, map.at(sr, sc));
            }
        }
    }
    return out;
}

namespace {

DepthMap crop_top_left(const DepthMap& map, int h, int w) {
    if (map.height() == h && map.width() == w) return map;
    DepthMap out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (map.valid_at(r, c)) out.set(r, c, map.at(r, c));
        }
    }
    return out;
}

}  // namespace

Pipeline::Pipeline(const PipelineConfig& config, std::uint64_t init_seed)
    : config_(config),
      init_seed_(init_seed),
      store_(),
      init_rng_(init_seed),
      apc_(store_, config_.apc, init_rng_),
      hourglass_(store_, config_.hourglass, init_rng_) {}

Pipeline::StepLosses Pipeline::forward_losses(const SceneSample& frame) {
    const int mult = config_.hourglass.downsample_multiple();
    const DepthMap stereo = pad_to_multiple(frame.d_stereo, mult, true);
    const DepthMap lidar = pad_to_multiple(frame.d_lidar_sparse, mult, false);
    const DepthMap gt = pad_to_multiple(frame.d_gt, mult, false);

    Tensor conf = apc_.forward(make_masked_feature(lidar), Mode::kTrain);

    const ConfidenceMap guide = make_guiding_confidence(lidar, config_.dilation);
    auto gv = guide.values();
    Tensor guide_t =
        Tensor::from_vector(conf.shape(), std::vector<double>(gv.begin(), gv.end()));
    const std::vector<std::uint8_t> all(gv.size(), 1);
    Tensor l_c = mse_masked(conf, guide_t, all);

    Tensor fused = fuse_depth_tensor(stereo, lidar, conf);
    Tensor input = config_.hourglass.with_confidence_input
                       ? concat_channels(std::vector<Tensor>{fused, conf})
                       : fused;
    std::vector<Tensor> outputs = hourglass_.forward(input, Mode::kTrain);

    StepLosses losses;
    losses.stage = stage_losses(outputs, gt);
    losses.confidence = l_c;
    losses.total = total_loss(losses.stage, l_c);
    return losses;
}

TrainingResult Pipeline::train(const DatasetManifest& manifest, const std::filesystem::path& root,
                               const TrainHyperparams& hp) {
    if (manifest.frames.empty()) throw ArgumentError("train: manifest has no frames");
    if (hp.iterations < 1) throw ArgumentError("train: iterations must be >= 1");

    Sgd optimizer(store_.params(), hp.lr, hp.momentum);
    std::vector<std::optional<SceneSample>> cache(manifest.frames.size());

    TrainingResult result;
    result.curve.reserve(hp.iterations);
    for (int iter = 0; iter < hp.iterations; ++iter) {
        const std::size_t fi = static_cast<std::size_t>(iter) % manifest.frames.size();
        if (!cache[fi]) cache[fi] = load_frame(root, manifest.frames[fi], manifest.config);

        try {
            store_.zero_grad();
            StepLosses losses = forward_losses(*cache[fi]);
            const double total = losses.total.item();
            if (!std::isfinite(total)) {
                throw NumericError("total loss is not finite");
            }
            losses.total.backward();
            optimizer.step();

            LossRow row;
            for (const Tensor& s : losses.stage) row.stage.push_back(s.item());
            row.confidence = losses.confidence.item();
            row.total = total;
            result.curve.push_back(std::move(row));
        } catch (const NumericError& e) {
            throw TrainingError("training diverged at iteration " + std::to_string(iter) + ": " +
                                e.what());
        }
    }
    return result;
}

InferenceResult Pipeline::infer(const SceneSample& frame) {
    const int h = frame.d_stereo.height(), w = frame.d_stereo.width();
    const int mult = config_.hourglass.downsample_multiple();
    const DepthMap stereo = pad_to_multiple(frame.d_stereo, mult, true);
    const DepthMap lidar = pad_to_multiple(frame.d_lidar_sparse, mult, false);

    Tensor conf = apc_.forward(make_masked_feature(lidar), Mode::kEval);
    Tensor fused = fuse_depth_tensor(stereo, lidar, conf);
    Tensor input = config_.hourglass.with_confidence_input
                       ? concat_channels(std::vector<Tensor>{fused, conf})
                       : fused;
    std::vector<Tensor> outputs = hourglass_.forward(input, Mode::kEval);

    auto dv = outputs.back().data();
    DepthMap depth =
        DepthMap::from_values(stereo.height(), stereo.width(),
                              std::vector<double>(dv.begin(), dv.end()));
    auto cv = conf.data();
    ConfidenceMap confidence = ConfidenceMap::from_values(
        stereo.height(), stereo.width(), std::vector<double>(cv.begin(), cv.end()));

    InferenceResult out;
    out.depth = crop_top_left(depth, h, w);
    if (confidence.height() == h && confidence.width() == w) {
        out.confidence = std::move(confidence);
    } else {
        ConfidenceMap cropped(h, w);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) cropped.set(r, c, confidence.at(r, c));
        }
        out.confidence = std::move(cropped);
    }
    return out;
}

namespace {

constexpr double kCombineCodeMax = 0.0;
constexpr double kCombineCodeSum = 1.0;

}  // namespace

void Pipeline::save(const std::filesystem::path& path) const {
    Checkpoint ckpt;
    ckpt.set_scalar("meta.version", 1.0);
    std::vector<double> widths(config_.apc.widths.begin(), config_.apc.widths.end());
    std::vector<double> kernels(config_.apc.kernels.begin(), config_.apc.kernels.end());
    ckpt.set("meta.apc.widths", {static_cast<std::uint32_t>(widths.size())}, widths);
    ckpt.set("meta.apc.kernels", {static_cast<std::uint32_t>(kernels.size())}, kernels);
    ckpt.set_scalar("meta.apc.head_kernel", config_.apc.head_kernel);
    ckpt.set_scalar("meta.hg.stages", config_.hourglass.stages);
    ckpt.set_scalar("meta.hg.levels", config_.hourglass.levels);
    ckpt.set_scalar("meta.hg.base_channels", config_.hourglass.base_channels);
    ckpt.set_scalar("meta.hg.with_confidence_input",
                    config_.hourglass.with_confidence_input ? 1.0 : 0.0);
    ckpt.set_scalar("meta.hg.dense_connections",
                    config_.hourglass.dense_connections ? 1.0 : 0.0);
    ckpt.set_scalar("meta.dilation.kernel_size", config_.dilation.kernel_size);
    ckpt.set_scalar("meta.dilation.half_distance", config_.dilation.half_distance);
    ckpt.set_scalar("meta.dilation.combine", config_.dilation.combine == CombineMode::kSumClamped
                                                 ? kCombineCodeSum
                                                 : kCombineCodeMax);
    ckpt.set_scalar("meta.init_seed", static_cast<double>(init_seed_));
    store_params(ckpt, store_);
    ckpt.save(path);
}

Pipeline Pipeline::load(const std::filesystem::path& path) {
    const Checkpoint ckpt = Checkpoint::load(path);
    PipelineConfig config;
    const CheckpointEntry& widths = ckpt.get("meta.apc.widths");
    const CheckpointEntry& kernels = ckpt.get("meta.apc.kernels");
    config.apc.widths.assign(widths.data.begin(), widths.data.end());
    config.apc.kernels.assign(kernels.data.begin(), kernels.data.end());
    config.apc.head_kernel = static_cast<int>(ckpt.get_scalar("meta.apc.head_kernel"));
    config.hourglass.stages = static_cast<int>(ckpt.get_scalar("meta.hg.stages"));
    config.hourglass.levels = static_cast<int>(ckpt.get_scalar("meta.hg.levels"));
    config.hourglass.base_channels = static_cast<int>(ckpt.get_scalar("meta.hg.base_channels"));
    config.hourglass.with_confidence_input =
        ckpt.get_scalar("meta.hg.with_confidence_input") != 0.0;
    config.hourglass.dense_connections = ckpt.get_scalar("meta.hg.dense_connections") != 0.0;
    config.dilation.kernel_size = static_cast<int>(ckpt.get_scalar("meta.dilation.kernel_size"));
    config.dilation.half_distance = ckpt.get_scalar("meta.dilation.half_distance");
    config.dilation.combine = ckpt.get_scalar("meta.dilation.combine") == kCombineCodeSum
                                  ? CombineMode::kSumClamped
                                  : CombineMode::kMax;
    const auto seed = static_cast<std::uint64_t>(ckpt.get_scalar("meta.init_seed"));

    Pipeline pipeline(config, seed);
    load_params(ckpt, pipeline.store_);
    return pipeline;
}

}  // namespace depthfuse
