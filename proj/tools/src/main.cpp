// depthfuse: sparse-lidar + stereo depth fusion pipeline driver.
//
// Subcommands: gen, confidence, fuse, train, eval, stats. Every option can
// come from a JSON config file (--config); explicit flags win. Each run that
// writes outputs also writes its fully resolved configuration next to them,
// so any artifact can be reproduced from the files alone.
//
// Exit codes: 0 success, 2 usage or input error, 3 runtime/numeric error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "depthfuse/checkpoint.hpp"
#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_png.hpp"
#include "depthfuse/errors.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/pipeline.hpp"
#include "depthfuse/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
    std::string config_path;
    std::string root = ".";
    std::int64_t seed = 0;
    int jobs = 1;
};

json g_file_config = json::object();

// The config file must be known before CLI11 assigns defaults, so --config is
// pulled straight out of argv ahead of the real parse.
std::string scan_config_path(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return {};
}

json load_file_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw depthfuse::IoError("cannot open config file " + path);
    try {
        json j;
        f >> j;
        if (!j.is_object()) throw depthfuse::FormatError("config file must hold a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw depthfuse::FormatError("bad config file " + path + ": " + e.what());
    }
}

const json* config_section(const char* name) {
    auto it = g_file_config.find(name);
    if (it == g_file_config.end() || !it->is_object()) return nullptr;
    return &*it;
}

template <typename T>
void from_config(const json* section, const char* key, T& value) {
    if (!section) return;
    auto it = section->find(key);
    if (it == section->end()) return;
    try {
        value = it->get<T>();
    } catch (const json::exception& e) {
        throw depthfuse::FormatError(std::string("config key ") + key + ": " + e.what());
    }
}

template <typename T>
void from_config_top(const char* key, T& value) {
    from_config(&g_file_config, key, value);
}

std::string combine_name(depthfuse::CombineMode mode) {
    return mode == depthfuse::CombineMode::kSumClamped ? "sum" : "max";
}

depthfuse::CombineMode combine_from_name(const std::string& name) {
    if (name == "max") return depthfuse::CombineMode::kMax;
    if (name == "sum") return depthfuse::CombineMode::kSumClamped;
    throw depthfuse::ArgumentError("combine mode must be 'max' or 'sum', got '" + name + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw depthfuse::IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw depthfuse::IoError("failed writing " + path.string());
}

void write_resolved_config(const fs::path& path, const ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Pure per-item work fanned over a fixed pool; exceptions resurface on the
// calling thread.
template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
    if (n <= 0) return;
    if (jobs <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int count = std::min(jobs, n);
    pool.reserve(count);
    for (int t = 0; t < count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string frame_stem(const std::string& lidar_name) {
    std::string stem = fs::path(lidar_name).stem().string();
    const std::string suffix = "_lidar";
    if (stem.size() > suffix.size() &&
        stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
        stem.erase(stem.size() - suffix.size());
    }
    return stem;
}

ordered_json synth_section_json(const depthfuse::SynthConfig& c) {
    return ordered_json::parse(depthfuse::synth_config_json(c));
}

ordered_json dilation_section_json(const depthfuse::DilationSpec& d) {
    ordered_json j;
    j["kernel_size"] = d.kernel_size;
    j["half_distance"] = d.half_distance;
    j["combine"] = combine_name(d.combine);
    return j;
}

ordered_json apc_section_json(const depthfuse::ApcConfig& c) {
    ordered_json j;
    j["widths"] = c.widths;
    j["kernels"] = c.kernels;
    j["head_kernel"] = c.head_kernel;
    return j;
}

ordered_json hourglass_section_json(const depthfuse::HourglassConfig& c) {
    ordered_json j;
    j["stages"] = c.stages;
    j["levels"] = c.levels;
    j["base_channels"] = c.base_channels;
    j["with_confidence_input"] = c.with_confidence_input;
    j["dense_connections"] = c.dense_connections;
    return j;
}

// ---------------------------------------------------------------- sections

depthfuse::SynthConfig synth_from_config() {
    depthfuse::SynthConfig c;
    const json* s = config_section("synth");
    from_config(s, "height", c.height);
    from_config(s, "width", c.width);
    from_config(s, "lidar_horizon_frac", c.lidar_horizon_frac);
    from_config(s, "gt_horizon_frac", c.gt_horizon_frac);
    from_config(s, "n_scanlines", c.n_scanlines);
    from_config(s, "dropout_center", c.dropout_center);
    from_config(s, "dropout_side", c.dropout_side);
    from_config(s, "stereo_noise_coeff", c.stereo_noise_coeff);
    from_config(s, "bleed_radius", c.bleed_radius);
    from_config(s, "bleed_edge_threshold", c.bleed_edge_threshold);
    from_config(s, "min_objects", c.min_objects);
    from_config(s, "max_objects", c.max_objects);
    from_config(s, "min_depth", c.min_depth);
    from_config(s, "max_depth", c.max_depth);
    return c;
}

depthfuse::DilationSpec dilation_from_config() {
    depthfuse::DilationSpec d;
    const json* s = config_section("dilation");
    from_config(s, "kernel_size", d.kernel_size);
    from_config(s, "half_distance", d.half_distance);
    if (s) {
        std::string combine = combine_name(d.combine);
        from_config(s, "combine", combine);
        d.combine = combine_from_name(combine);
    }
    return d;
}

depthfuse::ApcConfig apc_from_config() {
    depthfuse::ApcConfig c;
    const json* s = config_section("apc");
    from_config(s, "widths", c.widths);
    from_config(s, "kernels", c.kernels);
    from_config(s, "head_kernel", c.head_kernel);
    return c;
}

depthfuse::HourglassConfig hourglass_from_config() {
    depthfuse::HourglassConfig c;
    const json* s = config_section("hourglass");
    from_config(s, "stages", c.stages);
    from_config(s, "levels", c.levels);
    from_config(s, "base_channels", c.base_channels);
    from_config(s, "with_confidence_input", c.with_confidence_input);
    from_config(s, "dense_connections", c.dense_connections);
    return c;
}

depthfuse::TrainHyperparams train_from_config() {
    depthfuse::TrainHyperparams hp;
    const json* s = config_section("train");
    from_config(s, "lr", hp.lr);
    from_config(s, "momentum", hp.momentum);
    from_config(s, "iterations", hp.iterations);
    return hp;
}

ordered_json common_json(const char* command, const CommonOpts& common) {
    ordered_json j;
    j["command"] = command;
    j["root"] = common.root;
    j["seed"] = common.seed;
    j["jobs"] = common.jobs;
    return j;
}

// ---------------------------------------------------------------- commands

int cmd_gen(const CommonOpts& common, const depthfuse::SynthConfig& synth, int frames,
            const std::string& out_dir) {
    const fs::path out = fs::path(common.root) / out_dir;
    depthfuse::gen_dataset(frames, common.seed, synth, out, common.jobs);

    ordered_json resolved = common_json("gen", common);
    resolved["frames"] = frames;
    resolved["out"] = out_dir;
    resolved["synth"] = synth_section_json(synth);
    write_resolved_config(out / "gen.config.json", resolved);
    std::cout << "wrote " << frames << " frames to " << out.string() << "\n";
    return kExitOk;
}

int cmd_confidence(const CommonOpts& common, const depthfuse::DilationSpec& dilation,
                   const std::string& manifest_rel, const std::string& out_dir) {
    const fs::path manifest_path = fs::path(common.root) / manifest_rel;
    const depthfuse::DatasetManifest manifest = depthfuse::load_manifest(manifest_path);
    const fs::path data_root = manifest_path.parent_path();
    const fs::path out = fs::path(common.root) / out_dir;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw depthfuse::IoError("cannot create " + out.string() + ": " + ec.message());

    const int n = static_cast<int>(manifest.frames.size());
    parallel_for(n, common.jobs, [&](int i) {
        const depthfuse::FrameRecord& rec = manifest.frames[i];
        const depthfuse::DepthMap lidar = depthfuse::load_depth_png(data_root / rec.lidar);
        const depthfuse::ConfidenceMap guide = depthfuse::make_guiding_confidence(lidar, dilation);
        depthfuse::save_confidence_png(out / (frame_stem(rec.lidar) + "_mg.png"), guide);
    });

    ordered_json resolved = common_json("confidence", common);
    resolved["manifest"] = manifest_rel;
    resolved["out"] = out_dir;
    resolved["dilation"] = dilation_section_json(dilation);
    write_resolved_config(out / "confidence.config.json", resolved);
    std::cout << "wrote " << n << " guiding-confidence maps to " << out.string() << "\n";
    return kExitOk;
}

int cmd_fuse(const CommonOpts& common, const std::string& stereo_rel, const std::string& lidar_rel,
             const std::string& confidence_rel, const std::string& out_rel) {
    const fs::path root(common.root);
    const depthfuse::DepthMap stereo = depthfuse::load_depth_png(root / stereo_rel);
    const depthfuse::DepthMap lidar = depthfuse::load_depth_png(root / lidar_rel);
    const depthfuse::ConfidenceMap conf = depthfuse::load_confidence_png(root / confidence_rel);
    const depthfuse::DepthMap fused = depthfuse::fuse_depth(stereo, lidar, conf);
    const fs::path out = root / out_rel;
    if (out.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(out.parent_path(), ec);
    }
    depthfuse::save_depth_png(out, fused);

    ordered_json resolved = common_json("fuse", common);
    resolved["stereo"] = stereo_rel;
    resolved["lidar"] = lidar_rel;
    resolved["confidence"] = confidence_rel;
    resolved["out"] = out_rel;
    write_resolved_config(fs::path(out.string() + ".config.json"), resolved);
    std::cout << "fused " << stereo_rel << " + " << lidar_rel << " -> " << out_rel << "\n";
    return kExitOk;
}

std::string loss_csv(const depthfuse::TrainingResult& result) {
    std::string csv = "iteration";
    const std::size_t stages = result.curve.empty() ? 0 : result.curve.front().stage.size();
    for (std::size_t s = 0; s < stages; ++s) csv += ",l" + std::to_string(s + 1);
    csv += ",lc,total\n";
    char buf[64];
    for (std::size_t i = 0; i < result.curve.size(); ++i) {
        const depthfuse::LossRow& row = result.curve[i];
        csv += std::to_string(i);
        for (double v : row.stage) {
            std::snprintf(buf, sizeof(buf), ",%.12g", v);
            csv += buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.12g,%.12g\n", row.confidence, row.total);
        csv += buf;
    }
    return csv;
}

int cmd_train(const CommonOpts& common, const depthfuse::PipelineConfig& config,
              const depthfuse::TrainHyperparams& hp, const std::string& manifest_rel,
              const std::string& out_rel) {
    const fs::path manifest_path = fs::path(common.root) / manifest_rel;
    const depthfuse::DatasetManifest manifest = depthfuse::load_manifest(manifest_path);
    const fs::path out = fs::path(common.root) / out_rel;
    if (out.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(out.parent_path(), ec);
    }

    depthfuse::Pipeline pipeline(config, static_cast<std::uint64_t>(common.seed));
    const depthfuse::TrainingResult result =
        pipeline.train(manifest, manifest_path.parent_path(), hp);
    pipeline.save(out);
    write_text(fs::path(out.string() + ".losses.csv"), loss_csv(result));

    ordered_json resolved = common_json("train", common);
    resolved["manifest"] = manifest_rel;
    resolved["out"] = out_rel;
    resolved["apc"] = apc_section_json(config.apc);
    resolved["hourglass"] = hourglass_section_json(config.hourglass);
    resolved["dilation"] = dilation_section_json(config.dilation);
    ordered_json tj;
    tj["lr"] = hp.lr;
    tj["momentum"] = hp.momentum;
    tj["iterations"] = hp.iterations;
    resolved["train"] = tj;
    write_resolved_config(fs::path(out.string() + ".config.json"), resolved);

    std::cout << "initial total loss " << result.curve.front().total << ", final "
              << result.curve.back().total << "\n"
              << "checkpoint written to " << out.string() << "\n";
    return kExitOk;
}

struct FrameEval {
    depthfuse::EvalReport full;
    std::optional<depthfuse::EvalReport> lower;
    std::optional<depthfuse::EvalReport> upper;
};

ordered_json frame_eval_json(const FrameEval& fe) {
    ordered_json j;
    j["full"] = ordered_json::parse(depthfuse::report_json(fe.full));
    if (fe.lower) j["lower"] = ordered_json::parse(depthfuse::report_json(*fe.lower));
    if (fe.upper) j["upper"] = ordered_json::parse(depthfuse::report_json(*fe.upper));
    return j;
}

int cmd_eval(const CommonOpts& common, const std::string& manifest_rel,
             const std::string& checkpoint_rel, const std::string& pred_dir_rel,
             const std::string& out_dir, bool save_pred) {
    const fs::path manifest_path = fs::path(common.root) / manifest_rel;
    const depthfuse::DatasetManifest manifest = depthfuse::load_manifest(manifest_path);
    const fs::path data_root = manifest_path.parent_path();
    const fs::path out = fs::path(common.root) / out_dir;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw depthfuse::IoError("cannot create " + out.string() + ": " + ec.message());

    std::optional<depthfuse::Pipeline> pipeline;
    if (!checkpoint_rel.empty()) {
        pipeline.emplace(depthfuse::Pipeline::load(fs::path(common.root) / checkpoint_rel));
    }
    const fs::path pred_dir = fs::path(common.root) / pred_dir_rel;

    const int horizon = manifest.config.lidar_horizon_row();
    const int n = static_cast<int>(manifest.frames.size());
    std::vector<FrameEval> evals(n);

    parallel_for(n, common.jobs, [&](int i) {
        const depthfuse::FrameRecord& rec = manifest.frames[i];
        const depthfuse::SceneSample frame =
            depthfuse::load_frame(data_root, rec, manifest.config);
        const std::string stem = frame_stem(rec.lidar);

        depthfuse::DepthMap pred;
        if (pipeline) {
            pred = pipeline->infer(frame).depth;
            if (save_pred) depthfuse::save_depth_png(out / (stem + "_pred.png"), pred);
        } else {
            pred = depthfuse::load_depth_png(pred_dir / (stem + "_pred.png"));
        }

        FrameEval fe;
        fe.full = depthfuse::evaluate(pred, frame.d_gt);
        const depthfuse::CompletenessReport cr =
            depthfuse::completeness_report(pred, frame.d_full, horizon);
        fe.lower = cr.lower;
        fe.upper = cr.upper;
        evals[i] = std::move(fe);
        write_text(out / (stem + "_eval.json"), frame_eval_json(evals[i]).dump(2) + "\n");
    });

    depthfuse::EvalAccumulator acc_full, acc_lower, acc_upper;
    for (const FrameEval& fe : evals) {
        acc_full.add(fe.full);
        if (fe.lower) acc_lower.add(*fe.lower);
        if (fe.upper) acc_upper.add(*fe.upper);
    }
    FrameEval aggregate;
    aggregate.full = acc_full.result("full");
    if (!acc_lower.empty()) aggregate.lower = acc_lower.result("lower");
    if (!acc_upper.empty()) aggregate.upper = acc_upper.result("upper");
    write_text(out / "aggregate.json", frame_eval_json(aggregate).dump(2) + "\n");

    ordered_json resolved = common_json("eval", common);
    resolved["manifest"] = manifest_rel;
    if (!checkpoint_rel.empty()) resolved["checkpoint"] = checkpoint_rel;
    if (!pred_dir_rel.empty()) resolved["pred_dir"] = pred_dir_rel;
    resolved["out"] = out_dir;
    resolved["save_pred"] = save_pred;
    write_resolved_config(out / "eval.config.json", resolved);

    std::cout << depthfuse::report_pretty(aggregate.full) << "\n";
    if (aggregate.lower) std::cout << depthfuse::report_pretty(*aggregate.lower) << "\n";
    if (aggregate.upper) std::cout << depthfuse::report_pretty(*aggregate.upper) << "\n";
    return kExitOk;
}

int cmd_stats(const CommonOpts& common, const std::string& manifest_rel, const std::string& dir_rel,
              int bins, int band_begin, int band_end, const std::string& out_rel) {
    std::vector<depthfuse::DepthMap> maps;
    depthfuse::RowBand band{band_begin, band_end};

    if (!manifest_rel.empty()) {
        const fs::path manifest_path = fs::path(common.root) / manifest_rel;
        const depthfuse::DatasetManifest manifest = depthfuse::load_manifest(manifest_path);
        const fs::path data_root = manifest_path.parent_path();
        for (const depthfuse::FrameRecord& rec : manifest.frames) {
            maps.push_back(depthfuse::load_depth_png(data_root / rec.lidar));
        }
        if (band.end <= band.begin && !maps.empty()) {
            band = {manifest.config.lidar_horizon_row(), maps.front().height()};
        }
    } else {
        const fs::path dir = fs::path(common.root) / dir_rel;
        if (!fs::is_directory(dir)) {
            throw depthfuse::IoError("not a directory: " + dir.string());
        }
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) maps.push_back(depthfuse::load_depth_png(f));
        if (band.end <= band.begin && !maps.empty()) {
            // Raw lidar projections leave the top third empty; measure below it.
            band = {maps.front().height() / 3, maps.front().height()};
        }
    }
    if (maps.empty()) throw depthfuse::ArgumentError("stats: no depth maps found");

    const std::vector<double> density = depthfuse::scanline_density_stats(maps, band, bins);

    ordered_json j;
    j["n_maps"] = maps.size();
    j["band_begin"] = band.begin;
    j["band_end"] = band.end;
    j["bins"] = bins;
    j["density"] = density;
    std::cout << "valid-pixel density over rows [" << band.begin << ", " << band.end << "), "
              << maps.size() << " maps:\n";
    for (std::size_t b = 0; b < density.size(); ++b) {
        std::cout << "  bin " << b << ": " << density[b] * 100.0 << "%\n";
    }

    if (!out_rel.empty()) {
        const fs::path out = fs::path(common.root) / out_rel;
        write_text(out, j.dump(2) + "\n");
        ordered_json resolved = common_json("stats", common);
        if (!manifest_rel.empty()) resolved["manifest"] = manifest_rel;
        if (!dir_rel.empty()) resolved["dir"] = dir_rel;
        resolved["bins"] = bins;
        resolved["band_begin"] = band.begin;
        resolved["band_end"] = band.end;
        resolved["out"] = out_rel;
        write_resolved_config(fs::path(out.string() + ".config.json"), resolved);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        g_file_config = load_file_config(scan_config_path(argc, argv));

        CLI::App app{"sparse-lidar + stereo depth fusion pipeline"};
        app.require_subcommand(1);

        CommonOpts common;
        from_config_top("root", common.root);
        from_config_top("seed", common.seed);
        from_config_top("jobs", common.jobs);
        auto add_common = [&](CLI::App* sub) {
            sub->add_option("--config", common.config_path, "JSON config file; flags override it");
            sub->add_option("--root", common.root, "base directory for every relative path");
            sub->add_option("--seed", common.seed, "deterministic seed");
            sub->add_option("--jobs", common.jobs, "worker threads for per-frame work")
                ->check(CLI::PositiveNumber);
        };

        // gen
        depthfuse::SynthConfig synth = synth_from_config();
        int gen_frames = 0;
        std::string gen_out;
        CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
        add_common(gen);
        gen->add_option("--frames", gen_frames, "number of frames")
            ->required()
            ->check(CLI::NonNegativeNumber);
        gen->add_option("--out", gen_out, "output directory")->required();
        gen->add_option("--height", synth.height, "frame height");
        gen->add_option("--width", synth.width, "frame width");
        gen->add_option("--scanlines", synth.n_scanlines, "lidar scanline count");
        gen->add_option("--min-objects", synth.min_objects, "minimum obstacle count");
        gen->add_option("--max-objects", synth.max_objects, "maximum obstacle count");
        gen->add_option("--noise-coeff", synth.stereo_noise_coeff,
                        "stereo noise sigma = coeff * depth^2");
        gen->add_option("--bleed-radius", synth.bleed_radius, "stereo edge-bleed radius, px");

        // confidence
        depthfuse::DilationSpec dilation = dilation_from_config();
        std::string conf_manifest, conf_out;
        std::string combine = combine_name(dilation.combine);
        CLI::App* conf = app.add_subcommand("confidence", "write guiding-confidence maps");
        add_common(conf);
        conf->add_option("--manifest", conf_manifest, "dataset manifest")->required();
        conf->add_option("--out", conf_out, "output directory")->required();
        conf->add_option("--kernel-size", dilation.kernel_size, "dilation kernel size (odd)");
        conf->add_option("--half-distance", dilation.half_distance,
                         "distance in px at which the stamp falls to 0.5");
        conf->add_option("--combine", combine, "overlap mode: max or sum");

        // fuse
        std::string fuse_stereo, fuse_lidar, fuse_conf, fuse_out;
        CLI::App* fusec = app.add_subcommand("fuse", "fuse one stereo/lidar pair");
        add_common(fusec);
        fusec->add_option("--stereo", fuse_stereo, "stereo depth PNG")->required();
        fusec->add_option("--lidar", fuse_lidar, "lidar depth PNG")->required();
        fusec->add_option("--confidence", fuse_conf, "lidar confidence PNG")->required();
        fusec->add_option("--out", fuse_out, "output depth PNG")->required();

        // train
        depthfuse::ApcConfig apc = apc_from_config();
        depthfuse::HourglassConfig hourglass = hourglass_from_config();
        depthfuse::TrainHyperparams hp = train_from_config();
        std::string train_manifest, train_out = "model.ckpt";
        CLI::App* train = app.add_subcommand("train", "train the fusion pipeline");
        add_common(train);
        train->add_option("--manifest", train_manifest, "dataset manifest")->required();
        train->add_option("--out", train_out, "checkpoint output path");
        train->add_option("--lr", hp.lr, "learning rate")->check(CLI::NonNegativeNumber);
        train->add_option("--momentum", hp.momentum, "SGD momentum");
        train->add_option("--iterations", hp.iterations, "training iterations")
            ->check(CLI::PositiveNumber);
        train->add_option("--stages", hourglass.stages, "hourglass stages");
        train->add_option("--levels", hourglass.levels, "hourglass down/up levels");
        train->add_option("--base-channels", hourglass.base_channels, "hourglass channel width");
        train->add_flag("--no-confidence-input,!--confidence-input",
                        [&hourglass](std::int64_t count) {
                            hourglass.with_confidence_input = count == 0;
                        },
                        "drop the confidence input channel");
        train->add_flag("--no-dense,!--dense",
                        [&hourglass](std::int64_t count) {
                            hourglass.dense_connections = count == 0;
                        },
                        "ablate dense cross-stage connections");

        // eval
        std::string eval_manifest, eval_ckpt, eval_pred_dir, eval_out = "eval";
        bool eval_save_pred = false;
        CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint or prediction dir");
        add_common(eval);
        eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
        eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint to run");
        eval->add_option("--pred-dir", eval_pred_dir, "directory of *_pred.png depth maps");
        eval->add_option("--out", eval_out, "report output directory");
        eval->add_flag("--save-pred", eval_save_pred, "also write predicted depth PNGs");

        // stats
        std::string stats_manifest, stats_dir, stats_out;
        int stats_bins = 3, stats_band_begin = 0, stats_band_end = 0;
        CLI::App* stats = app.add_subcommand("stats", "scanline density statistics");
        add_common(stats);
        stats->add_option("--manifest", stats_manifest, "dataset manifest (uses lidar maps)");
        stats->add_option("--dir", stats_dir, "directory of 16-bit depth PNGs");
        stats->add_option("--bins", stats_bins, "horizontal bins")->check(CLI::PositiveNumber);
        stats->add_option("--band-begin", stats_band_begin, "first row of the measured band");
        stats->add_option("--band-end", stats_band_end, "one past the last row of the band");
        stats->add_option("--out", stats_out, "write the JSON report here");

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            std::cerr << e.what() << "\n";
            return kExitUsage;
        }

        if (gen->parsed()) return cmd_gen(common, synth, gen_frames, gen_out);
        if (conf->parsed()) {
            dilation.combine = combine_from_name(combine);
            return cmd_confidence(common, dilation, conf_manifest, conf_out);
        }
        if (fusec->parsed()) {
            return cmd_fuse(common, fuse_stereo, fuse_lidar, fuse_conf, fuse_out);
        }
        if (train->parsed()) {
            depthfuse::PipelineConfig config{apc, hourglass, dilation_from_config()};
            return cmd_train(common, config, hp, train_manifest, train_out);
        }
        if (eval->parsed()) {
            if (eval_ckpt.empty() == eval_pred_dir.empty()) {
                std::cerr << "eval: exactly one of --checkpoint or --pred-dir is required\n";
                return kExitUsage;
            }
            return cmd_eval(common, eval_manifest, eval_ckpt, eval_pred_dir, eval_out,
                            eval_save_pred);
        }
        if (stats->parsed()) {
            if (stats_manifest.empty() == stats_dir.empty()) {
                std::cerr << "stats: exactly one of --manifest or --dir is required\n";
                return kExitUsage;
            }
            return cmd_stats(common, stats_manifest, stats_dir, stats_bins, stats_band_begin,
                             stats_band_end, stats_out);
        }
        return kExitUsage;
    } catch (const depthfuse::TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const depthfuse::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const depthfuse::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
