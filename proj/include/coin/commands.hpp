// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Implementations behind the coinsplat subcommands. Each takes a plain
// options struct so it can be driven without the argument parser.

#pragma once

#include "coin/coin.hpp"
#include "coin/depth_warp.hpp"
#include "coin/eval.hpp"
#include "coin/synth.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace coin::cmd {

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out << text;
}

// ---------------------------------------------------------------- synth ----

struct SynthOptions {
    fs::path out;
    long seed = 0;
    int views = kDefaultViews;
    int heldout = kDefaultViews;
    int size = 64;
    int gaussians = 2000;
    InconsistencySpec perturb{0.1, 3};
};

/// Writes the perturbed training set to `out`, the same poses without
/// perturbation to `out/clean` and held-out poses to `out/heldout`.
inline void synth(const SynthOptions& o, ThreadPool* pool = nullptr) {
    if (o.views < 2) {
        throw Error(ErrorCode::Config, "--views must be at least 2");
    }
    if (o.size < 1 || o.gaussians < 1 || o.heldout < 0) {
        throw Error(ErrorCode::Config, "--size, --gaussians must be positive and --heldout non-negative");
    }
    InconsistencySpec spec = o.perturb;
    spec.seed = static_cast<std::uint64_t>(o.seed);
    spec.validate();
    const auto scene = make_scene<float>(static_cast<std::uint64_t>(o.seed), o.gaussians);
    auto clean = render_views(scene, o.views, o.size, pool);
    auto bundle = inject(clean, spec);
    save_dataset(o.out, bundle.perturbed);
    save_dataset(o.out / "clean", bundle.clean);
    if (o.heldout > 0) {
        save_dataset(o.out / "heldout", render_heldout(scene, o.heldout, o.size, pool));
    }
}

// ---------------------------------------------------------------- train ----

struct TrainOptions {
    fs::path data;
    fs::path out;
    TrainConfig config;
    std::optional<fs::path> resume;
    bool quiet = false;
};

inline fs::path checkpoint_path(const fs::path& dir, long iteration) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "checkpoint_%07ld.bin", iteration);
    return dir / buf;
}

/// Trains and writes `out/checkpoint.bin` plus `out/losses.csv`. A resumed
/// run appends to an existing log.
inline void train(const TrainOptions& o, ThreadPool* pool = nullptr) {
    const auto ds = load_dataset<float>(o.data);
    fs::create_directories(o.out);
    const fs::path csv = o.out / "losses.csv";

    std::optional<Trainer<float>> trainer;
    bool append = false;
    if (o.resume) {
        trainer.emplace(ds, o.config, load_checkpoint<float>(*o.resume), pool);
        append = fs::exists(csv);
    } else {
        trainer.emplace(ds, o.config, pool);
    }
    std::ofstream log(csv, append ? std::ios::app : std::ios::trunc);
    if (!log) {
        throw Error(ErrorCode::Io, "cannot write " + csv.string());
    }
    if (!append) {
        log << LossReport::csv_header() << '\n';
    }
    trainer->run(
        [&](const LossReport& r) {
            log << r.csv_row() << '\n';
            if (!o.quiet && r.iteration % (o.config.log_every * 100) == 0) {
                std::fprintf(stderr, "it %ld phase %d total %.5f psnr %.2f\n", r.iteration, r.phase, r.total, r.psnr_c);
            }
        },
        [&](long it) { save_checkpoint(checkpoint_path(o.out, it), trainer->checkpoint()); });
    log.flush();
    save_checkpoint(o.out / "checkpoint.bin", trainer->checkpoint());
}

// --------------------------------------------------------------- render ----

struct RenderCommandOptions {
    fs::path checkpoint;
    fs::path cameras; // cameras.json or a dataset directory
    fs::path out;
    ViewMode mode = ViewMode::Consistent;
    std::optional<int> view;
    bool depth = false;
};

inline fs::path cameras_file(const fs::path& p) { return fs::is_directory(p) ? p / "cameras.json" : p; }

inline ViewMode parse_mode(const std::string& s) {
    if (s == "consistent") {
        return ViewMode::Consistent;
    }
    if (s == "reference") {
        return ViewMode::ReferenceEmbedding;
    }
    throw Error(ErrorCode::Config, "unknown render mode '" + s + "' (consistent, reference)");
}

/// Renders every camera to `out/NNN.png` and writes `out/render_stats.json`.
inline void render(const RenderCommandOptions& o, ThreadPool* pool = nullptr) {
    const auto ck = load_checkpoint<float>(o.checkpoint);
    const auto cams = read_cameras<float>(cameras_file(o.cameras));
    if (o.view) {
        ck.model.embeddings.index_of(*o.view);
    }
    fs::create_directories(o.out);
    if (o.depth) {
        fs::create_directories(o.out / "depth");
    }
    Json stats = Json::array();
    for (const auto& [id, cam] : cams) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = infer(ck.model, cam, o.mode, o.view, pool);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        write_png(o.out / (view_stem(id) + ".png"), r.color);
        if (o.depth) {
            write_pfm(o.out / "depth" / (view_stem(id) + ".pfm"), r.depth);
        }
        stats.push_back({{"id", id},
                         {"gaussian_count", r.stats.gaussian_count},
                         {"culled_count", r.stats.culled_count},
                         {"skipped_count", r.stats.skipped_count},
                         {"ms", ms}});
    }
    write_text(o.out / "render_stats.json", Json{{"views", stats}}.dump(2) + "\n");
}

// ----------------------------------------------------------------- warp ----

struct WarpOptions {
    fs::path anchor, anchor_depth, target_depth, anchor_cam, target_cam;
    std::optional<int> anchor_id, target_id; // select from a cameras.json
    std::optional<fs::path> base;            // blend the warp over this image
    double tol = kDefaultWarpTolerance;
    int band = 1;
    fs::path out_image, out_mask;
};

/// A camera from a single-camera JSON object or from a cameras.json by id.
inline Camera<float> load_camera(const fs::path& path, std::optional<int> id) {
    const Json j = read_json(path);
    if (j.contains("cameras")) {
        const auto cams = read_cameras<float>(path);
        if (!id && cams.size() == 1) {
            return cams[0].second;
        }
        if (!id) {
            throw Error(ErrorCode::Config, path.string() + " holds several cameras; pass a view id");
        }
        std::string avail;
        for (const auto& [cid, cam] : cams) {
            if (cid == *id) {
                return cam;
            }
            avail += " " + std::to_string(cid);
        }
        throw Error(ErrorCode::UnknownView, "no camera " + std::to_string(*id) + " in " + path.string() + "; available:" + avail);
    }
    return camera_from_json<float>(j).second;
}

inline void warp(const WarpOptions& o, ThreadPool* pool = nullptr) {
    if (o.band < 0) {
        throw Error(ErrorCode::Config, "--band must be >= 0");
    }
    const auto anchor = read_png<float>(o.anchor);
    const DepthImage<float> anchor_depth(read_pfm<float>(o.anchor_depth));
    const DepthImage<float> target_depth(read_pfm<float>(o.target_depth));
    const auto acam = load_camera(o.anchor_cam, o.anchor_id);
    const auto tcam = load_camera(o.target_cam, o.target_id);
    auto res = coin::warp(anchor, anchor_depth, acam, tcam, target_depth, float(o.tol), pool);
    const auto mask = o.band > 0 ? soften_mask(res.mask, o.band) : res.mask;
    Image<float> image = res.image;
    if (o.base) {
        image = blend(res.image, read_png<float>(*o.base), mask);
    }
    write_png(o.out_image, image);
    if (!o.out_mask.empty()) {
        write_pfm(o.out_mask, mask.weights);
    }
}

// ----------------------------------------------------------------- eval ----

struct EvalOptions {
    fs::path renders;
    fs::path truth; // image directory or dataset directory
    std::vector<int> ids; // empty: every ground-truth view
};

inline fs::path image_dir(const fs::path& p) { return fs::is_directory(p / "images") ? p / "images" : p; }

/// View ids of the NNN.png files in a directory, ascending.
inline std::vector<int> png_ids(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(ErrorCode::Io, "not a directory: " + dir.string());
    }
    std::set<int> ids;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto stem = e.path().stem().string();
        if (e.path().extension() == ".png" && !stem.empty() &&
            stem.find_first_not_of("0123456789") == std::string::npos) {
            ids.insert(std::stoi(stem));
        }
    }
    return {ids.begin(), ids.end()};
}

/// Per-view PSNR and SSIM (both on 8-bit values) plus means.
inline Json eval(const EvalOptions& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path truth_dir = image_dir(o.truth), render_dir = image_dir(o.renders);
    const std::vector<int> ids = o.ids.empty() ? png_ids(truth_dir) : o.ids;
    if (ids.empty()) {
        throw Error(ErrorCode::Config, "no ground-truth views in " + truth_dir.string());
    }
    std::string missing_truth, missing_render;
    for (int id : ids) {
        if (!fs::exists(truth_dir / (view_stem(id) + ".png"))) {
            missing_truth += " " + std::to_string(id);
        }
        if (!fs::exists(render_dir / (view_stem(id) + ".png"))) {
            missing_render += " " + std::to_string(id);
        }
    }
    if (!missing_truth.empty()) {
        throw Error(ErrorCode::UnknownView, "ground truth missing views:" + missing_truth);
    }
    if (!missing_render.empty()) {
        throw Error(ErrorCode::UnknownView, "renders missing views:" + missing_render);
    }
    Json views = Json::array();
    double sum_psnr = 0, sum_ssim = 0;
    for (int id : ids) {
        const auto a = read_png<double>(render_dir / (view_stem(id) + ".png"));
        const auto b = read_png<double>(truth_dir / (view_stem(id) + ".png"));
        if (!a.same_shape(b)) {
            throw Error(ErrorCode::DimensionMismatch, "view " + std::to_string(id) + ": render and truth sizes differ");
        }
        const double p = psnr(a, b), s = ssim_quantized(a, b);
        if (!std::isfinite(p) || !std::isfinite(s)) {
            throw Error(ErrorCode::NonFiniteLoss, "view " + std::to_string(id) + ": non-finite metric");
        }
        sum_psnr += p;
        sum_ssim += s;
        views.push_back({{"id", id}, {"psnr", p}, {"ssim", s}});
    }
    const double n = double(ids.size());
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return Json{{"count", ids.size()},
                {"mean_psnr", sum_psnr / n},
                {"mean_ssim", sum_ssim / n},
                {"views", views},
                {"runtime_ms", ms}};
}

// ---------------------------------------------------------------- bench ----

struct BenchOptions {
    long seed = 0;
    int gaussians = 20000;
    int size = 512;
    int repeats = 5;
    std::optional<fs::path> image;
};

inline Json bench(const BenchOptions& o, ThreadPool* pool = nullptr) {
    if (o.gaussians < 1 || o.size < 1) {
        throw Error(ErrorCode::Config, "--gaussians and --size must be positive");
    }
    const auto scene = benchmark_scene<float>(static_cast<std::uint64_t>(o.seed), o.gaussians);
    const auto cam = orbit_cameras<float>(kDefaultViews, float(kOrbitRadius), Vec3<float>::Zero(),
                                          orbit_intrinsics<float>(o.size))[0];
    const auto r = render_benchmark(scene, cam, o.repeats, Vec3<float>(0, 0, 0), pool);
    if (o.image) {
        write_png(*o.image, render(scene, cam, Vec3<float>(0, 0, 0), {}, pool).color);
    }
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.image_hash));
    return Json{{"gaussians", o.gaussians},
                {"width", o.size},
                {"height", o.size},
                {"threads", r.threads},
                {"repeats", r.repeats},
                {"median_ms", r.median_ms},
                {"fps", r.fps},
                {"stages_ms", {{"project", r.project_ms}, {"sort", r.sort_ms}, {"bin", r.bin_ms}, {"raster", r.raster_ms}}},
                {"culled_count", r.stats.culled_count},
                {"skipped_count", r.stats.skipped_count},
                {"tile_entries", r.stats.tile_entries},
                {"image_hash", hash},
                {"deterministic", r.deterministic}};
}

} // namespace coin::cmd
