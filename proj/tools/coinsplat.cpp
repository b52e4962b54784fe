// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#include "coin/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace coin;

struct Globals {
    std::string config;
    std::optional<long> seed;
    std::optional<int> threads;
    std::string out;
};

int thread_count(const Globals& g) {
    const int n = g.threads.value_or(default_thread_count());
    if (n < 1) {
        throw Error(ErrorCode::Config, "--threads must be >= 1");
    }
    return n;
}

fs::path require_out(const Globals& g, const char* cmd) {
    if (g.out.empty()) {
        throw Error(ErrorCode::Config, std::string(cmd) + " needs --out");
    }
    return g.out;
}

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coinsplat: Gaussian splatting with COIN training"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "training config file (key = value lines)");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--threads", g.threads, "worker threads (default: COIN_THREADS or 1)");
    app.add_option("--out", g.out, "output directory or file");

    // synth
    cmd::SynthOptions so;
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
    synth->add_option("--views", so.views, "training views on the orbit");
    synth->add_option("--heldout", so.heldout, "held-out views between the training poses");
    synth->add_option("--size", so.size, "image width and height in pixels");
    synth->add_option("--gaussians", so.gaussians, "Gaussians in the ground-truth scene");
    synth->add_option("--affine-sigma", so.perturb.affine_sigma, "per-view color gain/bias spread");
    synth->add_option("--blobs", so.perturb.blob_count, "transient blobs per view");
    synth->add_option("--jitter", so.perturb.jitter, "max geometric jitter in pixels");

    // train
    cmd::TrainOptions to;
    std::string data, resume;
    std::optional<long> p1, p2;
    bool baseline = false;
    std::vector<std::string> sets;
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");
    train->add_option("--phase1-iters", p1, "base-only iterations");
    train->add_option("--phase2-iters", p2, "COIN iterations");
    train->add_flag("--baseline", baseline, "no COIN: pixel losses on the base model throughout");
    train->add_option("--set", sets, "config override key=value (repeatable)");
    train->add_flag("--quiet", to.quiet, "no progress output");

    // render
    cmd::RenderCommandOptions ro;
    std::string ckpt, cameras, mode = "consistent";
    std::optional<int> view;
    auto* render = app.add_subcommand("render", "render a checkpoint from a set of cameras");
    render->add_option("--checkpoint", ckpt, "checkpoint file")->required();
    render->add_option("--cameras", cameras, "cameras.json or dataset directory")->required();
    render->add_option("--mode", mode, "consistent or reference");
    render->add_option("--view", view, "embedding used by reference mode (default: reference view)");
    render->add_flag("--depth", ro.depth, "also write expected depth as PFM");

    // warp
    cmd::WarpOptions wo;
    std::string anchor, anchor_depth, target_depth, anchor_cam, target_cam, base, out_image, out_mask;
    auto* warp = app.add_subcommand("warp", "warp an anchor image into a target view using depth");
    warp->add_option("--anchor", anchor, "anchor image (PNG)")->required();
    warp->add_option("--anchor-depth", anchor_depth, "anchor depth (PFM)")->required();
    warp->add_option("--target-depth", target_depth, "target depth (PFM)")->required();
    warp->add_option("--anchor-cam", anchor_cam, "anchor camera JSON")->required();
    warp->add_option("--target-cam", target_cam, "target camera JSON")->required();
    warp->add_option("--anchor-id", wo.anchor_id, "anchor view id when --anchor-cam is a cameras.json");
    warp->add_option("--target-id", wo.target_id, "target view id when --target-cam is a cameras.json");
    warp->add_option("--base", base, "blend the warped texture over this image");
    warp->add_option("--tol", wo.tol, "relative depth tolerance");
    warp->add_option("--band", wo.band, "boundary band width in pixels");
    warp->add_option("--out-image", out_image, "output image (PNG)")->required();
    warp->add_option("--out-mask", out_mask, "output visibility mask (PFM)");

    // eval
    cmd::EvalOptions eo;
    std::string renders, truth;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of renders against ground truth");
    eval->add_option("--renders", renders, "directory of NNN.png renders")->required();
    eval->add_option("--truth", truth, "ground-truth image or dataset directory")->required();
    eval->add_option("--ids", eo.ids, "view ids to compare (default: all ground-truth views)")->delimiter(',');

    // bench
    cmd::BenchOptions bo;
    std::string bench_image;
    auto* bench = app.add_subcommand("bench", "forward rendering benchmark");
    bench->add_option("--gaussians", bo.gaussians, "Gaussian count");
    bench->add_option("--size", bo.size, "image width and height");
    bench->add_option("--repeats", bo.repeats, "timed renders");
    bench->add_option("--image", bench_image, "write the rendered image (PNG)");

    CLI11_PARSE(app, argc, argv);

    try {
        ThreadPool pool(thread_count(g));
        const long seed = g.seed.value_or(0);
        if (synth->parsed()) {
            so.out = require_out(g, "synth");
            so.seed = seed;
            cmd::synth(so, &pool);
        } else if (train->parsed()) {
            to.data = data;
            to.out = require_out(g, "train");
            if (!resume.empty()) {
                to.resume = resume;
                // a resumed run continues with the configuration it was started with
                std::istringstream text(load_checkpoint<float>(resume).config_text);
                to.config = TrainConfig::parse(text, "checkpoint config");
            }
            if (!g.config.empty()) {
                to.config = TrainConfig::load(g.config);
            }
            if (g.seed) {
                to.config.seed = *g.seed;
            }
            if (p1) {
                to.config.phase1_iters = *p1;
            }
            if (p2) {
                to.config.phase2_iters = *p2;
            }
            if (baseline) {
                to.config.coin = false;
            }
            for (const auto& kv : sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    throw Error(ErrorCode::Config, "--set expects key=value, got '" + kv + "'");
                }
                to.config.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            to.config.validate();
            cmd::train(to, &pool);
        } else if (render->parsed()) {
            ro.checkpoint = ckpt;
            ro.cameras = cameras;
            ro.out = require_out(g, "render");
            ro.mode = cmd::parse_mode(mode);
            ro.view = view;
            cmd::render(ro, &pool);
        } else if (warp->parsed()) {
            wo.anchor = anchor;
            wo.anchor_depth = anchor_depth;
            wo.target_depth = target_depth;
            wo.anchor_cam = anchor_cam;
            wo.target_cam = target_cam;
            if (!base.empty()) {
                wo.base = base;
            }
            wo.out_image = out_image;
            wo.out_mask = out_mask;
            cmd::warp(wo, &pool);
        } else if (eval->parsed()) {
            eo.renders = renders;
            eo.truth = truth;
            const std::string report = cmd::eval(eo).dump(2) + "\n";
            if (g.out.empty()) {
                std::cout << report;
            } else {
                cmd::write_text(g.out, report);
            }
        } else if (bench->parsed()) {
            bo.seed = seed;
            if (!bench_image.empty()) {
                bo.image = bench_image;
            }
            const std::string report = cmd::bench(bo, &pool).dump(2) + "\n";
            if (g.out.empty()) {
                std::cout << report;
            } else {
                cmd::write_text(g.out, report);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "coinsplat: %s\n", one_line(e.what()).c_str());
        return 1;
    }
    return 0;
}
