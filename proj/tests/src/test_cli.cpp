// Drives the installed command-line binary as a subprocess: artifact layout,
// determinism, config/flag precedence, and the exit-code contract.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfuse/checkpoint.hpp"
#include "depthfuse/confidence.hpp"
#include "depthfuse/depth_map.hpp"
#include "depthfuse/depth_png.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/synth.hpp"

using namespace depthfuse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter__++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static inline int counter__ = 0;
};

// Runs the binary with stdout/stderr captured into files under `dir`.
int run(const std::string& args, const fs::path& dir) {
    const std::string cmd = std::string(DEPTHFUSE_CLI_PATH) + " " + args + " > " +
                            (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json parse_file(const fs::path& p) { return json::parse(slurp(p)); }

// Small fast dataset arguments shared by the pipeline tests.
const std::string kGenArgs = "--frames 3 --height 32 --width 64 --scanlines 6";
const std::string kTinyNet = "--stages 1 --levels 1 --base-channels 4";

}  // namespace

TEST_CASE("help and usage errors") {
    TempDir t;
    CHECK(run("--help", t.path) == 0);
    CHECK(run("gen --help", t.path) == 0);
    CHECK(run("", t.path) == 2);                       // missing subcommand
    CHECK(run("explode", t.path) == 2);                // unknown subcommand
    CHECK(run("gen --out x", t.path) == 2);            // missing required --frames
    CHECK(run("gen --frames 2 --out x --bogus", t.path) == 2);
    CHECK(slurp(t.path / "stderr.txt").find("--bogus") != std::string::npos);
}

TEST_CASE("gen: negative frame count is a usage error") {
    TempDir t;
    CHECK(run("gen --frames -1 --out data", t.path) == 2);
}

TEST_CASE("gen writes frames, manifest, and its resolved config") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 40 --root " + t.path.string(),
                t.path) == 0);
    CHECK(fs::exists(t.path / "data" / "manifest.json"));
    CHECK(fs::exists(t.path / "data" / "frame_0000_stereo.png"));
    CHECK(fs::exists(t.path / "data" / "frame_0002_full.png"));
    const json cfg = parse_file(t.path / "data" / "gen.config.json");
    CHECK(cfg["command"] == "gen");
    CHECK(cfg["frames"] == 3);
    CHECK(cfg["seed"] == 40);
    CHECK(cfg["synth"]["height"] == 32);
    CHECK(cfg["synth"]["n_scanlines"] == 6);
}

TEST_CASE("gen twice with one seed: byte-identical trees") {
    TempDir a, b, scratch;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 41 --root " + a.path.string(),
                scratch.path) == 0);
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 41 --root " + b.path.string(),
                scratch.path) == 0);
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(a.path / "data"))
        names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    REQUIRE(names.size() == 3 * 4 + 2);  // maps + manifest + resolved config
    for (const fs::path& n : names) {
        // The resolved config embeds --root, which legitimately differs.
        if (n == "gen.config.json") continue;
        CHECK_MESSAGE(read_file(a.path / "data" / n) == read_file(b.path / "data" / n),
                      n.string());
    }
}

TEST_CASE("config file seeds defaults, flags override") {
    TempDir t;
    {
        std::ofstream f(t.path / "cfg.json");
        f << R"({"synth": {"height": 24, "width": 48}, "seed": 9})";
    }
    REQUIRE(run("gen --frames 1 --out a --config " + (t.path / "cfg.json").string() +
                    " --root " + t.path.string(),
                t.path) == 0);
    json cfg = parse_file(t.path / "a" / "gen.config.json");
    CHECK(cfg["synth"]["height"] == 24);
    CHECK(cfg["synth"]["width"] == 48);
    CHECK(cfg["seed"] == 9);

    REQUIRE(run("gen --frames 1 --out b --height 28 --seed 10 --config " +
                    (t.path / "cfg.json").string() + " --root " + t.path.string(),
                t.path) == 0);
    cfg = parse_file(t.path / "b" / "gen.config.json");
    CHECK(cfg["synth"]["height"] == 28);  // flag wins
    CHECK(cfg["synth"]["width"] == 48);   // config survives
    CHECK(cfg["seed"] == 10);

    CHECK(run("gen --frames 1 --out c --config " + (t.path / "missing.json").string(),
              t.path) == 2);
    {
        std::ofstream f(t.path / "broken.json");
        f << "{nope";
    }
    CHECK(run("gen --frames 1 --out c --config " + (t.path / "broken.json").string(),
              t.path) == 2);
}

TEST_CASE("confidence: maps per frame plus resolved combine mode") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 42 --root " + t.path.string(),
                t.path) == 0);
    REQUIRE(run("confidence --manifest data/manifest.json --out mg --combine sum --root " +
                    t.path.string(),
                t.path) == 0);
    CHECK(fs::exists(t.path / "mg" / "frame_0000_mg.png"));
    CHECK(fs::exists(t.path / "mg" / "frame_0002_mg.png"));
    const json cfg = parse_file(t.path / "mg" / "confidence.config.json");
    CHECK(cfg["dilation"]["combine"] == "sum");
    CHECK(cfg["dilation"]["kernel_size"] == 3);

    CHECK(run("confidence --manifest data/manifest.json --out mg2 --combine weird --root " +
                  t.path.string(),
              t.path) == 2);
}

TEST_CASE("fuse: all-ones confidence reproduces lidar over stereo") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 43 --root " + t.path.string(),
                t.path) == 0);
    const DepthMap stereo = load_depth_png(t.path / "data" / "frame_0001_stereo.png");
    const DepthMap lidar = load_depth_png(t.path / "data" / "frame_0001_lidar.png");
    const ConfidenceMap ones(stereo.height(), stereo.width(), 1.0);
    save_confidence_png(t.path / "ones.png", ones);

    REQUIRE(run("fuse --stereo data/frame_0001_stereo.png --lidar data/frame_0001_lidar.png "
                "--confidence ones.png --out fused.png --root " +
                    t.path.string(),
                t.path) == 0);
    CHECK(fs::exists(t.path / "fused.png.config.json"));
    const DepthMap fused = load_depth_png(t.path / "fused.png");
    const DepthMap want = fuse_depth(stereo, lidar, ones);
    for (int r = 0; r < fused.height(); ++r)
        for (int c = 0; c < fused.width(); ++c) {
            CHECK(fused.at(r, c) == want.at(r, c));
            if (lidar.valid_at(r, c)) CHECK(fused.at(r, c) == lidar.at(r, c));
        }

    CHECK(run("fuse --stereo missing.png --lidar missing.png --confidence missing.png "
              "--out f.png --root " +
                  t.path.string(),
              t.path) == 2);
}

TEST_CASE("train/eval flow: artifacts, determinism, and the report chain") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 44 --root " + t.path.string(),
                t.path) == 0);

    const std::string train_args = "train --manifest data/manifest.json " + kTinyNet +
                                   " --iterations 4 --seed 3 --root " + t.path.string();
    REQUIRE(run(train_args + " --out m.ckpt", t.path) == 0);
    CHECK(fs::exists(t.path / "m.ckpt"));
    CHECK(fs::exists(t.path / "m.ckpt.config.json"));
    const std::string stdout_text = slurp(t.path / "stdout.txt");
    CHECK(stdout_text.find("initial total loss") != std::string::npos);

    // Loss curve: header matches the one-stage config, one row per iteration.
    std::istringstream csv(slurp(t.path / "m.ckpt.losses.csv"));
    std::string line;
    std::getline(csv, line);
    CHECK(line == "iteration,l1,lc,total");
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);

    // Byte-identical retrain.
    REQUIRE(run(train_args + " --out m2.ckpt", t.path) == 0);
    CHECK(read_file(t.path / "m.ckpt") == read_file(t.path / "m2.ckpt"));

    // Eval from the checkpoint, saving predictions.
    REQUIRE(run("eval --manifest data/manifest.json --checkpoint m.ckpt --out ev --save-pred"
                " --root " +
                    t.path.string(),
                t.path) == 0);
    CHECK(fs::exists(t.path / "ev" / "frame_0000_eval.json"));
    CHECK(fs::exists(t.path / "ev" / "frame_0000_pred.png"));
    CHECK(fs::exists(t.path / "ev" / "aggregate.json"));
    const std::string eval_out = slurp(t.path / "stdout.txt");
    CHECK(eval_out.find("rmse") != std::string::npos);
    CHECK(eval_out.find("upper") != std::string::npos);
    const json agg = parse_file(t.path / "ev" / "aggregate.json");
    CHECK(agg.contains("full"));
    CHECK(agg.contains("lower"));
    CHECK(agg.contains("upper"));
    CHECK(agg["full"]["n_pixels"].get<long long>() > 0);

    // Per-frame reports agree in structure.
    const json fe = parse_file(t.path / "ev" / "frame_0001_eval.json");
    CHECK(fe["full"]["region"] == "full");
    CHECK(fe["upper"]["region"] == "upper");
}

TEST_CASE("eval --pred-dir with perfect predictions scores perfectly") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 45 --root " + t.path.string(),
                t.path) == 0);
    fs::create_directories(t.path / "preds");
    for (int i = 0; i < 3; ++i) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "frame_%04d", i);
        fs::copy_file(t.path / "data" / (std::string(stem) + "_full.png"),
                      t.path / "preds" / (std::string(stem) + "_pred.png"));
    }
    REQUIRE(run("eval --manifest data/manifest.json --pred-dir preds --out ev --root " +
                    t.path.string(),
                t.path) == 0);
    const json agg = parse_file(t.path / "ev" / "aggregate.json");
    CHECK(agg["full"]["rmse"].get<double>() == 0.0);
    CHECK(agg["full"]["delta1"].get<double>() == 100.0);
    CHECK(agg["upper"]["rmse"].get<double>() == 0.0);
    CHECK(agg["lower"]["delta3"].get<double>() == 100.0);
}

TEST_CASE("eval option exclusivity and missing inputs") {
    TempDir t;
    REQUIRE(run("gen --frames 1 --height 32 --width 64 --scanlines 6 --out data --root " +
                    t.path.string(),
                t.path) == 0);
    CHECK(run("eval --manifest data/manifest.json --root " + t.path.string(), t.path) == 2);
    CHECK(run("eval --manifest data/manifest.json --checkpoint a --pred-dir b --root " +
                  t.path.string(),
              t.path) == 2);
    CHECK(run("eval --manifest data/manifest.json --checkpoint missing.ckpt --root " +
                  t.path.string(),
              t.path) == 2);
    CHECK(slurp(t.path / "stderr.txt").find("missing.ckpt") != std::string::npos);
}

TEST_CASE("a numerically broken model is a runtime error, not usage") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --root " + t.path.string(), t.path) == 0);
    REQUIRE(run("train --manifest data/manifest.json " + kTinyNet +
                    " --iterations 1 --out d.ckpt --root " + t.path.string(),
                t.path) == 0);
    Checkpoint ckpt = Checkpoint::load(t.path / "d.ckpt");
    const CheckpointEntry& bias = ckpt.get("hg.stage0.head.conv.bias");
    ckpt.set("hg.stage0.head.conv.bias", bias.dims,
             std::vector<double>(bias.data.size(), std::numeric_limits<double>::quiet_NaN()));
    ckpt.save(t.path / "poisoned.ckpt");
    CHECK(run("eval --manifest data/manifest.json --checkpoint poisoned.ckpt --root " +
                  t.path.string(),
              t.path) == 3);
    CHECK(slurp(t.path / "stderr.txt").find("non-finite") != std::string::npos);
}

TEST_CASE("stats: manifest mode, dir mode, and the json artifact") {
    TempDir t;
    REQUIRE(run("gen " + kGenArgs + " --out data --seed 46 --root " + t.path.string(),
                t.path) == 0);
    REQUIRE(run("stats --manifest data/manifest.json --out s.json --root " + t.path.string(),
                t.path) == 0);
    const std::string text = slurp(t.path / "stdout.txt");
    CHECK(text.find("bin 0") != std::string::npos);
    CHECK(text.find("bin 2") != std::string::npos);
    const json s = parse_file(t.path / "s.json");
    CHECK(s["n_maps"] == 3);
    CHECK(s["bins"] == 3);
    CHECK(s["density"].size() == 3);
    // Manifest mode defaults the band to below the lidar horizon.
    CHECK(s["band_begin"].get<int>() == 11);  // lround(32/3)
    CHECK(s["band_end"].get<int>() == 32);
    CHECK(fs::exists(t.path / "s.json.config.json"));

    // Directory mode over the lidar maps only.
    fs::create_directories(t.path / "maps");
    for (int i = 0; i < 3; ++i) {
        char name[40];
        std::snprintf(name, sizeof(name), "frame_%04d_lidar.png", i);
        fs::copy_file(t.path / "data" / name, t.path / "maps" / name);
    }
    REQUIRE(run("stats --dir maps --bins 5 --root " + t.path.string(), t.path) == 0);
    CHECK(slurp(t.path / "stdout.txt").find("bin 4") != std::string::npos);

    CHECK(run("stats --root " + t.path.string(), t.path) == 2);
    CHECK(run("stats --manifest data/manifest.json --dir maps --root " + t.path.string(),
              t.path) == 2);
    CHECK(run("stats --dir not_there --root " + t.path.string(), t.path) == 2);
}
