#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthfuse/depth_map.hpp"

namespace depthfuse {

/// Generator knobs. Defaults produce 64x192 frames with the two modalities'
/// characteristic asymmetry: lidar scanlines only below the horizon with a
/// center-heavy keep rate, stereo dense but noisy with quadratic range error
/// and edge bleed.
struct SynthConfig {
    int height = 64;
    int width = 192;
    double lidar_horizon_frac = 1.0 / 3.0;  // from the top
    double gt_horizon_frac = 1.0 / 3.0;
    int n_scanlines = 12;
    double dropout_center = 0.55;
    double dropout_side = 0.70;
    double stereo_noise_coeff = 0.002;  // sigma = coeff * depth^2
    int bleed_radius = 2;
    double bleed_edge_threshold = 0.5;  // meters of depth gap that count as an edge
    int min_objects = 2;
    int max_objects = 6;
    double min_depth = 1.0;
    double max_depth = 80.0;

    int lidar_horizon_row() const;
    int gt_horizon_row() const;
    void validate() const;
};

/// Axis-aligned fronto-parallel obstacle, half-open pixel rect at a constant
/// depth. `overhead` obstacles float entirely above the lidar horizon.
struct BoxObstacle {
    int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    double depth = 0.0;
    bool overhead = false;
};

/// One generated frame: the four depth maps plus the scene description that
/// produced them.
struct SceneSample {
    DepthMap d_stereo;
    DepthMap d_lidar_sparse;
    DepthMap d_gt;
    DepthMap d_full;
    int image_height = 0;
    int image_width = 0;
    std::int64_t seed = 0;
    int lidar_horizon_row = 0;
    int gt_horizon_row = 0;
    std::vector<BoxObstacle> objects;
};

/// Renders one frame, fully determined by (seed, config).
SceneSample gen_scene(std::int64_t seed, const SynthConfig& config);

struct FrameRecord {
    std::string stereo;
    std::string lidar;
    std::string gt;
    std::string full;
    std::int64_t seed = 0;
};

struct DatasetManifest {
    SynthConfig config;
    std::vector<FrameRecord> frames;
};

/// Writes n_frames * 4 PNG files plus manifest.json into out_dir; frame i
/// uses seed base_seed + i. Returns the manifest that was written. `jobs`
/// parallelizes frame rendering (output is identical for any jobs value).
DatasetManifest gen_dataset(int n_frames, std::int64_t base_seed, const SynthConfig& config,
                            const std::filesystem::path& out_dir, int jobs = 1);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

/// Loads a frame's four maps from disk; paths resolve relative to `root`.
SceneSample load_frame(const std::filesystem::path& root, const FrameRecord& record,
                       const SynthConfig& config);

std::string synth_config_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const std::string& json_text);

}  // namespace depthfuse
