#include "depthfuse/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "depthfuse/depth_png.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/rng.hpp"

namespace depthfuse {

namespace {

// Stereo values stay clear of the 16-bit PNG ceiling even after noise.
constexpr double kStereoClampMax = 250.0;

int frac_row(int height, double frac) { return static_cast<int>(std::lround(height * frac)); }

bool columns_overlap(const BoxObstacle& box, const std::vector<BoxObstacle>& placed) {
    for (const BoxObstacle& other : placed) {
        if (box.c0 < other.c1 && other.c0 < box.c1) return true;
    }
    return false;
}

}  // namespace

int SynthConfig::lidar_horizon_row() const { return frac_row(height, lidar_horizon_frac); }
int SynthConfig::gt_horizon_row() const { return frac_row(height, gt_horizon_frac); }

void SynthConfig::validate() const {
    if (height < 16 || width < 16) throw ArgumentError("synth: frame must be at least 16x16");
    if (lidar_horizon_frac <= 0.0 || lidar_horizon_frac >= 1.0 || gt_horizon_frac <= 0.0 ||
        gt_horizon_frac >= 1.0) {
        throw ArgumentError("synth: horizon fractions must be in (0,1)");
    }
    if (n_scanlines < 1 || n_scanlines > height - lidar_horizon_row()) {
        throw ArgumentError("synth: scanline count does not fit below the horizon");
    }
    if (dropout_center < 0.0 || dropout_center >= 1.0 || dropout_side < 0.0 ||
        dropout_side >= 1.0) {
        throw ArgumentError("synth: dropout rates must be in [0,1)");
    }
    if (stereo_noise_coeff < 0.0) throw ArgumentError("synth: negative noise coefficient");
    if (bleed_radius < 0) throw ArgumentError("synth: negative bleed radius");
    if (bleed_edge_threshold <= 0.0) throw ArgumentError("synth: edge threshold must be positive");
    if (min_objects < 0 || max_objects < min_objects) {
        throw ArgumentError("synth: bad object count range");
    }
    if (min_depth <= 0.0 || max_depth <= min_depth) throw ArgumentError("synth: bad depth range");
    if (max_depth >= kStereoClampMax) {
        throw ArgumentError("synth: max depth too large for the 16-bit depth encoding");
    }
}

SceneSample gen_scene(std::int64_t seed, const SynthConfig& config) {
    config.validate();
    Rng rng(static_cast<std::uint64_t>(seed));
    const int H = config.height, W = config.width;
    const int h0 = config.lidar_horizon_row();
    const int gt0 = config.gt_horizon_row();

    // Ground plane with projective 1/(row - horizon) falloff; rows at and
    // above the horizon see sky at max range.
    const double ground_k = rng.uniform(1.4, 2.8) * static_cast<double>(H - 1 - h0);
    auto ground_depth = [&](int r) {
        if (r <= h0) return config.max_depth;
        return std::clamp(ground_k / static_cast<double>(r - h0), config.min_depth,
                          config.max_depth);
    };

    // Boxes with mutually disjoint column spans, so every object keeps an
    // exposed silhouette for the edge-bleed contract. The first box always
    // floats above the lidar horizon: the upper scene must contain structure
    // lidar never measures.
    const int n_objects = rng.uniform_int(config.min_objects, config.max_objects);
    std::vector<BoxObstacle> objects;
    for (int i = 0; i < n_objects; ++i) {
        const bool overhead = i == 0 || rng.bernoulli(0.3);
        for (int attempt = 0; attempt < 8; ++attempt) {
            BoxObstacle box;
            box.overhead = overhead;
            if (overhead) {
                box.depth = rng.uniform(3.0, 30.0);
                const int max_h = std::max(2, h0 / 2);
                const int bh = rng.uniform_int(2, max_h);
                box.r0 = rng.uniform_int(0, std::max(0, h0 - bh));
                box.r1 = std::min(box.r0 + bh, h0);
                const int bw = rng.uniform_int(W / 8, W / 3);
                box.c0 = rng.uniform_int(0, W - bw);
                box.c1 = box.c0 + bw;
            } else {
                box.depth = rng.uniform(2.0, 40.0);
                int r_bot = h0 + static_cast<int>(std::lround(ground_k / box.depth));
                r_bot = std::clamp(r_bot, h0 + 3, H);
                const int max_h = std::max(3, 2 * (r_bot - h0) / 3);
                const int min_h = std::max(3, (r_bot - h0) / 3);
                const int bh = rng.uniform_int(min_h, std::max(min_h, max_h));
                box.r1 = r_bot;
                box.r0 = std::max(0, r_bot - bh);
                const int bw = rng.uniform_int(W / 16, W / 4);
                box.c0 = rng.uniform_int(0, W - bw);
                box.c1 = box.c0 + bw;
            }
            if (!columns_overlap(box, objects)) {
                objects.push_back(box);
                break;
            }
        }
    }

    DepthMap d_full(H, W);
    // Which box surface is visible at each pixel (-1: ground or sky). Box
    // column spans are disjoint, so at most one box can claim a pixel.
    std::vector<int> surface(static_cast<std::size_t>(H) * W, -1);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double d = ground_depth(r);
            for (std::size_t i = 0; i < objects.size(); ++i) {
                const BoxObstacle& box = objects[i];
                if (r >= box.r0 && r < box.r1 && c >= box.c0 && c < box.c1 && box.depth < d) {
                    d = box.depth;
                    surface[static_cast<std::size_t>(r) * W + c] = static_cast<int>(i);
                }
            }
            d_full.set(r, c, d);
        }
    }

    DepthMap d_gt(H, W);
    for (int r = gt0; r < H; ++r) {
        for (int c = 0; c < W; ++c) d_gt.set(r, c, d_full.at(r, c));
    }

    // Scanlines: evenly spaced rows below the horizon, exact copies of the
    // true depth, thinned by a center-light dropout profile.
    DepthMap d_lidar(H, W);
    const double half_width = (W - 1) / 2.0;
    for (int i = 0; i < config.n_scanlines; ++i) {
        const int r = h0 + static_cast<int>((i + 0.5) * (H - h0) / config.n_scanlines);
        for (int c = 0; c < W; ++c) {
            const double t = std::abs(c - half_width) / half_width;
            const double dropout =
                config.dropout_center + (config.dropout_side - config.dropout_center) * t;
            const bool keep = rng.uniform() >= dropout;
            if (keep) d_lidar.set(r, c, d_full.at(r, c));
        }
    }

    // Stereo: dense, exact structure but noisy with sigma growing as depth^2,
    // then foreground depth smeared over true edges.
    Grid raw(H, W);
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const double d = d_full.at(r, c);
            const double noisy = d + rng.gaussian() * config.stereo_noise_coeff * d * d;
            raw.at(r, c) = std::clamp(noisy, config.min_depth * 0.5, kStereoClampMax);
        }
    }
    // Edge bleed: a pixel near an object silhouette, on the far side of the
    // depth discontinuity, reads the object's (noisy) depth instead of its
    // own — matching happily locked onto the foreground contour. The source
    // is the single closest qualifying object pixel (nearest surface on
    // ties), so the smooth perspective gradient of the ground never bleeds
    // and no minimum over noise samples biases the value.
    DepthMap d_stereo(H, W);
    const int R = config.bleed_radius;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            double v = raw.at(r, c);
            const double true_d = d_full.at(r, c);
            int best_dist = R + 1;
            double best_fg = config.max_depth + 1.0;
            for (int dr = -R; dr <= R; ++dr) {
                const int rr = r + dr;
                if (rr < 0 || rr >= H) continue;
                for (int dc = -R; dc <= R; ++dc) {
                    const int cc = c + dc;
                    if (cc < 0 || cc >= W) continue;
                    if (surface[static_cast<std::size_t>(rr) * W + cc] < 0) continue;
                    const double fg = d_full.at(rr, cc);
                    if (fg >= true_d - config.bleed_edge_threshold) continue;
                    const int dist = std::max(std::abs(dr), std::abs(dc));
                    if (dist < best_dist || (dist == best_dist && fg < best_fg)) {
                        best_dist = dist;
                        best_fg = fg;
                        v = raw.at(rr, cc);
                    }
                }
            }
            d_stereo.set(r, c, v);
        }
    }

    SceneSample sample;
    sample.d_stereo = std::move(d_stereo);
    sample.d_lidar_sparse = std::move(d_lidar);
    sample.d_gt = std::move(d_gt);
    sample.d_full = std::move(d_full);
    sample.image_height = H;
    sample.image_width = W;
    sample.seed = seed;
    sample.lidar_horizon_row = h0;
    sample.gt_horizon_row = gt0;
    sample.objects = std::move(objects);
    return sample;
}

namespace {

std::string frame_name(int index, const char* kind) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "frame_%04d_%s.png", index, kind);
    return buf;
}

}  // namespace

DatasetManifest gen_dataset(int n_frames, std::int64_t base_seed, const SynthConfig& config,
                            const std::filesystem::path& out_dir, int jobs) {
    if (n_frames < 0) throw ArgumentError("gen_dataset: negative frame count");
    if (jobs < 1) throw ArgumentError("gen_dataset: jobs must be >= 1");
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    DatasetManifest manifest;
    manifest.config = config;
    manifest.frames.resize(n_frames);

    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_frames) return;
            try {
                const std::int64_t seed = base_seed + i;
                const SceneSample sample = gen_scene(seed, config);
                FrameRecord rec;
                rec.stereo = frame_name(i, "stereo");
                rec.lidar = frame_name(i, "lidar");
                rec.gt = frame_name(i, "gt");
                rec.full = frame_name(i, "full");
                rec.seed = seed;
                save_depth_png(out_dir / rec.stereo, sample.d_stereo);
                save_depth_png(out_dir / rec.lidar, sample.d_lidar_sparse);
                save_depth_png(out_dir / rec.gt, sample.d_gt);
                save_depth_png(out_dir / rec.full, sample.d_full);
                manifest.frames[i] = std::move(rec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n_frames);
                return;
            }
        }
    };

    if (jobs == 1 || n_frames <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min(jobs, std::max(1, n_frames));
        pool.reserve(count);
        for (int t = 0; t < count; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

namespace {

nlohmann::ordered_json config_to_json(const SynthConfig& c) {
    nlohmann::ordered_json j;
    j["height"] = c.height;
    j["width"] = c.width;
    j["lidar_horizon_frac"] = c.lidar_horizon_frac;
    j["gt_horizon_frac"] = c.gt_horizon_frac;
    j["n_scanlines"] = c.n_scanlines;
    j["dropout_center"] = c.dropout_center;
    j["dropout_side"] = c.dropout_side;
    j["stereo_noise_coeff"] = c.stereo_noise_coeff;
    j["bleed_radius"] = c.bleed_radius;
    j["bleed_edge_threshold"] = c.bleed_edge_threshold;
    j["min_objects"] = c.min_objects;
    j["max_objects"] = c.max_objects;
    j["min_depth"] = c.min_depth;
    j["max_depth"] = c.max_depth;
    return j;
}

SynthConfig config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    try {
        c.height = j.value("height", c.height);
        c.width = j.value("width", c.width);
        c.lidar_horizon_frac = j.value("lidar_horizon_frac", c.lidar_horizon_frac);
        c.gt_horizon_frac = j.value("gt_horizon_frac", c.gt_horizon_frac);
        c.n_scanlines = j.value("n_scanlines", c.n_scanlines);
        c.dropout_center = j.value("dropout_center", c.dropout_center);
        c.dropout_side = j.value("dropout_side", c.dropout_side);
        c.stereo_noise_coeff = j.value("stereo_noise_coeff", c.stereo_noise_coeff);
        c.bleed_radius = j.value("bleed_radius", c.bleed_radius);
        c.bleed_edge_threshold = j.value("bleed_edge_threshold", c.bleed_edge_threshold);
        c.min_objects = j.value("min_objects", c.min_objects);
        c.max_objects = j.value("max_objects", c.max_objects);
        c.min_depth = j.value("min_depth", c.min_depth);
        c.max_depth = j.value("max_depth", c.max_depth);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad generator config: ") + e.what());
    }
    return c;
}

}  // namespace

std::string synth_config_json(const SynthConfig& config) {
    return config_to_json(config).dump(2);
}

SynthConfig synth_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad generator config JSON: ") + e.what());
    }
    return config_from_json(j);
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
    nlohmann::ordered_json j;
    j["config"] = config_to_json(manifest.config);
    j["frames"] = nlohmann::ordered_json::array();
    for (const FrameRecord& f : manifest.frames) {
        nlohmann::ordered_json fj;
        fj["stereo"] = f.stereo;
        fj["lidar"] = f.lidar;
        fj["gt"] = f.gt;
        fj["full"] = f.full;
        fj["seed"] = f.seed;
        j["frames"].push_back(std::move(fj));
    }
    const std::string text = j.dump(2) + "\n";
    write_file(manifest_path,
               std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                             text.size()));
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    const auto bytes = read_file(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    DatasetManifest manifest;
    try {
        manifest.config = config_from_json(j.at("config"));
        for (const auto& fj : j.at("frames")) {
            FrameRecord rec;
            rec.stereo = fj.at("stereo").get<std::string>();
            rec.lidar = fj.at("lidar").get<std::string>();
            rec.gt = fj.at("gt").get<std::string>();
            rec.full = fj.at("full").get<std::string>();
            rec.seed = fj.at("seed").get<std::int64_t>();
            manifest.frames.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    return manifest;
}

SceneSample load_frame(const std::filesystem::path& root, const FrameRecord& record,
                       const SynthConfig& config) {
    SceneSample sample;
    sample.d_stereo = load_depth_png(root / record.stereo);
    sample.d_lidar_sparse = load_depth_png(root / record.lidar);
    sample.d_gt = load_depth_png(root / record.gt);
    sample.d_full = load_depth_png(root / record.full);
    if (!sample.d_stereo.same_shape(sample.d_lidar_sparse) ||
        !sample.d_stereo.same_shape(sample.d_gt) || !sample.d_stereo.same_shape(sample.d_full)) {
        throw FormatError("frame " + record.stereo + ": map dimensions disagree");
    }
    sample.image_height = sample.d_stereo.height();
    sample.image_width = sample.d_stereo.width();
    sample.seed = record.seed;
    sample.lidar_horizon_row = config.lidar_horizon_row();
    sample.gt_horizon_row = config.gt_horizon_row();
    return sample;
}

}  // namespace depthfuse
