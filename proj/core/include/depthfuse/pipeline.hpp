#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "depthfuse/confidence.hpp"
#include "depthfuse/confidence_net.hpp"
#include "depthfuse/hourglass.hpp"
#include "depthfuse/synth.hpp"

namespace depthfuse {

struct PipelineConfig {
    ApcConfig apc;
    HourglassConfig hourglass;
    DilationSpec dilation;  // guiding-confidence supervision target
};

struct TrainHyperparams {
    double lr = 1e-3;
    double momentum = 0.9;
    int iterations = 200;
};

/// One training step's losses: per-stage terms, the confidence term, and
/// their unweighted sum.
struct LossRow {
    std::vector<double> stage;
    double confidence = 0.0;
    double total = 0.0;
};

struct TrainingResult {
    std::vector<LossRow> curve;  // one row per iteration, in order
};

struct InferenceResult {
    DepthMap depth;            // final-stage prediction
    ConfidenceMap confidence;  // regressed lidar confidence
};

/// Pad a map at the bottom/right so dims hit the next multiple. `replicate`
/// extends the edge values (dense maps); otherwise new pixels are invalid
/// (sparse maps, groundtruth).
DepthMap pad_to_multiple(const DepthMap& map, int multiple, bool replicate);

/// The full model: confidence regressor, confidence-weighted fusion, and the
/// hourglass refiner, sharing one parameter store.
///
/// Parameter initialization is drawn from `init_seed`; training itself is
/// deterministic (frames are cycled in manifest order, single-threaded), so
/// (config, init_seed, dataset) fully determine the trained checkpoint.
class Pipeline {
public:
    Pipeline(const PipelineConfig& config, std::uint64_t init_seed);

    /// Cycles the manifest's frames in order for hp.iterations steps of
    /// SGD-with-momentum over the total loss. Throws TrainingError naming the
    /// iteration if the loss stops being finite.
    TrainingResult train(const DatasetManifest& manifest, const std::filesystem::path& root,
                         const TrainHyperparams& hp);

    /// Eval-mode forward of one frame. Deterministic; safe to call from
    /// several threads at once.
    InferenceResult infer(const SceneSample& frame);

    void save(const std::filesystem::path& path) const;
    static Pipeline load(const std::filesystem::path& path);

    const PipelineConfig& config() const { return config_; }
    ParamStore& params() { return store_; }

private:
    struct StepLosses {
        std::vector<Tensor> stage;
        Tensor confidence;
        Tensor total;
    };
    StepLosses forward_losses(const SceneSample& frame);

    PipelineConfig config_;
    std::uint64_t init_seed_;
    ParamStore store_;
    Rng init_rng_;  // consumed during member construction below
    ConfidenceNet apc_;
    HourglassNet hourglass_;
};

}  // namespace depthfuse
