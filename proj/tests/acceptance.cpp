// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion; exits nonzero
// when any selected criterion fails.

#include "coin/commands.hpp"
#include "coin_fixture.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "ssim_oracle.hpp"
#include "warp_oracle.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>

using namespace coin;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_abs_diff(const Image<double>& a, const Image<double>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    }
    return d;
}

// ------------------------------------------------------------------- 1 ----

Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    RenderOptions<double> opt;
    // a wide cutoff keeps the footprint boundary out of the finite differences
    opt.sigma_cutoff = 10;
    int checked = 0;
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed * 101);
        const auto cam = coin::testing::random_camera(rng, 16);
        const auto gs = coin::testing::random_gaussians(rng, 12, cam);
        const auto w = coin::testing::random_weights(rng, 16, 16);
        const auto r = coin::testing::check_render_gradients(gs, cam, w, opt, 1e-4);
        checked += r.checked;
        worst = std::max(worst, r.worst_rel);
        if (!r.failure.empty()) {
            return {false, "renderer scene " + std::to_string(seed) + ": " + r.failure};
        }
        auto tc = coin::testing::make_tiny_coin(seed, 8, 16, 2);
        coin::testing::kink_free_targets(tc, seed);
        for (int v = 0; v < 2; ++v) {
            const auto c = coin::testing::check_coin_gradients(tc, v, {}, 1e-4);
            checked += c.checked;
            worst = std::max(worst, c.worst_rel);
            if (!c.failure.empty()) {
                return {false, "COIN scene " + std::to_string(seed) + " view " + std::to_string(v) + ": " + c.failure};
            }
        }
    }
    const double secs = seconds_since(t0);
    return {secs <= 120, fmt("%d derivatives on 5 scenes, worst rel err %.2e, %.1f s", checked, worst, secs)};
}

// --------------------------------------------------------------- 2 & 3 ----

struct SeparationRun {
    double psnr_coin = 0;
    double psnr_base = 0;
    double mean_offset = 0;
};

/// Trains COIN and the baseline on one synthetic bundle and scores I^C
/// against clean held-out renders.
SeparationRun separation_run(std::uint64_t seed, const InconsistencySpec& perturb, ThreadPool* pool) {
    const auto scene = make_scene<float>(seed, 2000);
    const auto clean = render_views(scene, kDefaultViews, 64, pool);
    const auto heldout = render_heldout(scene, kDefaultViews, 64, pool);
    InconsistencySpec spec = perturb;
    spec.seed = seed;
    const auto bundle = inject(clean, spec);

    auto score = [&](const CoinModel<float>& m) {
        double sum = 0;
        for (const auto& v : heldout.views) {
            sum += psnr(infer(m, v.camera, ViewMode::Consistent, std::nullopt, pool).color, v.image);
        }
        return sum / double(heldout.size());
    };
    SeparationRun out;
    TrainConfig cfg;
    cfg.seed = long(seed);
    Trainer<float> coin_run(bundle.perturbed, cfg, pool);
    coin_run.run();
    out.psnr_coin = score(coin_run.model());
    for (int id : bundle.perturbed.ids()) {
        out.mean_offset += coin_run.model().offsets(id).cwiseAbs().mean();
    }
    out.mean_offset /= double(bundle.perturbed.size());

    cfg.coin = false;
    Trainer<float> base_run(bundle.perturbed, cfg, pool);
    base_run.run();
    out.psnr_base = score(base_run.model());
    return out;
}

Outcome separation(ThreadPool* pool) {
    const auto t0 = std::chrono::steady_clock::now();
    InconsistencySpec spec;
    spec.affine_sigma = 0.1;
    spec.blob_count = 3;
    double coin_sum = 0, base_sum = 0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = separation_run(seed, spec, pool);
        coin_sum += r.psnr_coin;
        base_sum += r.psnr_base;
        per_seed += fmt(" [seed %d: coin %.3f base %.3f offset %.4f]", int(seed), r.psnr_coin, r.psnr_base, r.mean_offset);
    }
    const double gap = (coin_sum - base_sum) / 3;
    const double secs = seconds_since(t0);
    return {gap >= 1.0 && secs <= 20 * 60,
            fmt("mean held-out PSNR coin %.3f dB, baseline %.3f dB, gap %+.3f dB (need >= +1.0), %.0f s", coin_sum / 3,
                base_sum / 3, gap, secs) +
                per_seed};
}

Outcome zero_inconsistency(ThreadPool* pool) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = separation_run(1, InconsistencySpec{}, pool);
    const double gap = r.psnr_coin - r.psnr_base;
    return {r.mean_offset <= 0.01 && std::abs(gap) <= 0.3,
            fmt("mean |c_offset| %.5f (<= 0.01), coin %.3f dB vs baseline %.3f dB, gap %+.3f dB (within 0.3), %.0f s",
                r.mean_offset, r.psnr_coin, r.psnr_base, gap, seconds_since(t0))};
}

// ------------------------------------------------------------------- 4 ----

Outcome structure_routing() {
    const Rasterizer<double> raster(RenderOptions<double>{});
    const PyramidL1<double> proxy;
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t = coin::testing::make_tiny_coin(seed, 10, 16, 3);
        for (const auto& v : t.data.views) {
            LossTerms only_struc;
            only_struc.pixel = false;
            only_struc.reg = false;
            const auto ev = evaluate_losses(t.model, v, t.cfg, raster, proxy, LossStage::Coin, only_struc);
            if (!(ev.report.l_struc > 0)) {
                return {false, "structure loss is zero, nothing was tested"};
            }
            for (double g : ev.grads.theta) {
                if (g != 0.0) {
                    return {false, fmt("nonzero dL_struc/dtheta %.3e", g)};
                }
            }
            for (double g : ev.grads.view_embedding) {
                if (g != 0.0) {
                    return {false, fmt("nonzero dL_struc/de_view %.3e", g)};
                }
            }
            checked += int(ev.grads.theta.size() + ev.grads.view_embedding.size());
        }
    }
    return {true, fmt("%d MLP and embedding derivatives exactly zero over 15 views", checked)};
}

// ------------------------------------------------------------------- 5 ----

Outcome warp_oracle() {
    const oracle::TwoPlaneScene scene;
    const int n = 64;
    const Intrinsics<double> k{58.0, 58.0, (n - 1) / 2.0, (n - 1) / 2.0, n, n};
    const Camera<double> anchor(k, look_at<double>(Vec3<double>(0, 0, 0), Vec3<double>(0, 0, 1)));
    const auto [a_img, a_depth] = scene.render(anchor);

    // identity warp
    const auto id = warp(a_img, a_depth, anchor, anchor, a_depth);
    if (id.image != a_img) {
        return {false, "identity warp changed the image"};
    }
    double worst = 0;
    int occluded = 0;
    for (const auto& eye : {Vec3<double>(0.4, 0, 0), Vec3<double>(-0.3, 0.2, 0.1), Vec3<double>(0.15, -0.25, -0.2),
                            Vec3<double>(-0.5, -0.1, 0.3)}) {
        const Camera<double> target(k, look_at<double>(eye, Vec3<double>(0.05, 0, 5)));
        const auto [t_img, t_depth] = scene.render(target);
        const auto out = warp(a_img, a_depth, anchor, target, t_depth);
        const auto ref = oracle::brute_force_warp(a_img, a_depth, anchor, target, t_depth, 0.01L);
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const std::size_t px = static_cast<std::size_t>(y) * n + x;
                if (out.mask.weights(y, x) != (ref.visible[px] ? 1.0 : 0.0)) {
                    return {false, fmt("mask differs from oracle at (%d, %d)", x, y)};
                }
                occluded += !ref.visible[px];
                for (int c = 0; c < 3; ++c) {
                    worst = std::max(worst, std::abs(out.image(y, x, c) - double(ref.image[px * 3 + c])));
                }
            }
        }
        const auto soft = soften_mask(out.mask, 2);
        for (double v : soft.weights.data()) {
            if (v != 0.0 && v != kBoundaryWeight && v != 1.0) {
                return {false, fmt("softened mask holds %.17g", v)};
            }
        }
    }
    if (occluded == 0) {
        return {false, "no occluded pixels, the scene tests nothing"};
    }
    return {worst <= 1e-6,
            fmt("4 poses at 64x64: max abs diff %.2e, masks exact (%d hidden px), soft weights in {0, 0.1, 1}", worst,
                occluded)};
}

// ------------------------------------------------------------------- 6 ----

Outcome conservation() {
    double worst_sum = 0, worst_perm = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(1000 + trial);
        const auto cam = coin::testing::random_camera(rng, 32);
        auto gs = coin::testing::random_gaussians(rng, 30, cam);
        const Vec3<double> bg(0.3, 0.4, 0.5);
        const auto a = render<double>(gs, cam, bg);
        for (std::size_t p = 0; p < a.alpha.size(); ++p) {
            worst_sum = std::max(worst_sum, std::abs(a.alpha.data()[p] + a.transmittance.data()[p] - 1.0));
        }
        for (std::size_t i = gs.size(); i > 1; --i) {
            std::swap(gs[i - 1], gs[rng.index(i)]);
        }
        worst_perm = std::max(worst_perm, max_abs_diff(a.color, render<double>(gs, cam, bg).color));
    }
    return {worst_sum <= 1e-6 && worst_perm <= 1e-6,
            fmt("100 scenes: max |alpha + T - 1| %.2e, max permutation diff %.2e", worst_sum, worst_perm)};
}

// ------------------------------------------------------------------- 7 ----

Outcome rigid_invariance() {
    float worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(500 + trial);
        const auto scene = make_scene<float>(rng.next_u64(), 400);
        const auto cam = orbit_cameras<float>(8, 3.0f, Vec3<float>::Zero(), orbit_intrinsics<float>(48))[trial % 8];
        RigidTransform<float> t;
        const Vec3<float> axis = Vec3<float>(float(rng.normal()), float(rng.normal()), float(rng.normal())).normalized();
        t.rotation = Eigen::AngleAxisf(float(rng.uniform(0.2, 3.0)), axis).toRotationMatrix();
        t.translation = Vec3<float>(float(rng.normal()), float(rng.normal()), float(rng.normal()));
        auto moved = scene;
        moved.mesh = scene.mesh->transformed(t);
        Camera<float> cam2 = cam;
        cam2.pose = cam.pose.compose(t.inverse());
        const Vec3<float> bg(0.1f, 0.2f, 0.3f);
        const auto a = render(scene, cam, bg);
        const auto b = render(moved, cam2, bg);
        for (std::size_t i = 0; i < a.color.size(); ++i) {
            worst = std::max(worst, std::abs(a.color.data()[i] - b.color.data()[i]));
        }
    }
    return {worst <= 1e-4f, fmt("10 scenes (float): max pixel change %.2e", double(worst))};
}

// ------------------------------------------------------------------- 8 ----

Outcome ssim_check() {
    Rng rng(77);
    double worst = 0;
    for (int pair = 0; pair < 20; ++pair) {
        const int w = 11 + int(rng.index(30)), h = 11 + int(rng.index(30));
        Image<double> a(w, h, 3), b(w, h, 3);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a.data()[i] = rng.uniform();
            b.data()[i] = std::clamp(a.data()[i] + rng.normal() * 0.1 * (pair % 4), 0.0, 1.0);
        }
        if (ssim(a, a) != 1.0 || ssim(a.cast<float>(), a.cast<float>()) != 1.0f) {
            return {false, "ssim(I, I) is not exactly 1"};
        }
        worst = std::max(worst, std::abs(ssim(a, b) - double(oracle::reference_ssim(a, b))));
    }
    return {worst <= 1e-6, fmt("self-similarity exactly 1, 20 pairs within %.2e of the reference", worst)};
}

// ------------------------------------------------------------------- 9 ----

Outcome benchmark() {
    const auto scene = benchmark_scene<float>(0, 20000);
    const auto cam = orbit_cameras<float>(kDefaultViews, float(kOrbitRadius), Vec3<float>::Zero(),
                                          orbit_intrinsics<float>(512))[0];
    const Vec3<float> bg(0, 0, 0);
    const auto one = render_benchmark(scene, cam, 7, bg);
    ThreadPool pool(8);
    const auto eight = render_benchmark(scene, cam, 7, bg, &pool);
    const double speedup = one.median_ms / eight.median_ms;
    const bool same = one.deterministic && eight.deterministic && one.image_hash == eight.image_hash;
    return {one.median_ms <= 250 && speedup >= 2.5 && same,
            fmt("1 thread %.1f ms (<= 250), 8 threads %.1f ms, speedup %.2fx (>= 2.5), image %s, %u hardware threads",
                one.median_ms, eight.median_ms, speedup, same ? "bit-identical" : "DIFFERS",
                std::thread::hardware_concurrency())};
}

// --------------------------------------------------------------- 10/11 ----

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
    const std::string command = "\"" + cli + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    return std::system(command.c_str());
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("coinsplat_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Outcome determinism(const std::string& cli) {
    if (cli.empty()) {
        return {false, "no --cli executable given"};
    }
    const fs::path dir = scratch("determinism");
    const fs::path log = dir / "log.txt";
    const std::string ds = (dir / "ds").string();
    if (run_cli(cli, "--seed 4 --out \"" + ds + "\" synth --views 8 --heldout 0 --size 40 --gaussians 600", log)) {
        return {false, "synth failed, see " + log.string()};
    }
    for (const char* run : {"a", "b"}) {
        const std::string args = "--seed 9 --threads 2 --out \"" + (dir / run).string() + "\" train --data \"" + ds +
                                 "\" --phase1-iters 100 --phase2-iters 300 --quiet";
        if (run_cli(cli, args, log)) {
            return {false, std::string("train run ") + run + " failed, see " + log.string()};
        }
    }
    const bool csv = slurp(dir / "a" / "losses.csv") == slurp(dir / "b" / "losses.csv");
    const bool ckpt = slurp(dir / "a" / "checkpoint.bin") == slurp(dir / "b" / "checkpoint.bin");
    const auto size = fs::file_size(dir / "a" / "checkpoint.bin");
    fs::remove_all(dir);
    return {csv && ckpt, fmt("loss CSV %s, checkpoint (%zu bytes) %s", csv ? "identical" : "DIFFERS",
                             std::size_t(size), ckpt ? "identical" : "DIFFERS")};
}

Outcome end_to_end(const std::string& cli) {
    if (cli.empty()) {
        return {false, "no --cli executable given"};
    }
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = scratch("smoke");
    const fs::path log = dir / "log.txt";
    const std::string ds = (dir / "ds").string(), run = (dir / "run").string(), renders = (dir / "renders").string();
    const std::vector<std::pair<std::string, std::string>> steps = {
        {"synth", "--seed 1 --out \"" + ds + "\" synth"},
        {"train", "--seed 1 --out \"" + run + "\" train --data \"" + ds + "\" --phase1-iters 2000 --phase2-iters 6000 --quiet"},
        {"render", "--out \"" + renders + "\" render --checkpoint \"" + run + "/checkpoint.bin\" --cameras \"" + ds + "\""},
        {"eval", "--out \"" + (dir / "eval.json").string() + "\" eval --renders \"" + renders + "\" --truth \"" + ds +
                     "/clean\""},
    };
    for (const auto& [name, args] : steps) {
        if (run_cli(cli, args, log)) {
            return {false, name + " failed: " + slurp(log)};
        }
    }
    const Json rep = read_json(dir / "eval.json");
    const int count = rep["count"].get<int>();
    const double mean_psnr = rep["mean_psnr"].get<double>();
    const double secs = seconds_since(t0);
    fs::remove_all(dir);
    return {count == kDefaultViews && std::isfinite(mean_psnr) && secs <= 30 * 60,
            fmt("synth, train 2000+6000, render and eval of %d orbit views in %.0f s (<= 1800), mean PSNR vs clean %.2f dB",
                count, secs, mean_psnr)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coinsplat acceptance suite"};
    std::vector<int> selected;
    std::string cli;
    app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 11));
    app.add_option("--cli", cli, "path to the coinsplat executable (criteria 10 and 11)");
    CLI11_PARSE(app, argc, argv);
    if (selected.empty()) {
        for (int i = 1; i <= 11; ++i) {
            selected.push_back(i);
        }
    }

    ThreadPool pool(default_thread_count());
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient correctness", gradients},
        {"COIN separation", [&] { return separation(&pool); }},
        {"zero-inconsistency control", [&] { return zero_inconsistency(&pool); }},
        {"structure-loss routing", structure_routing},
        {"warp oracle equivalence", warp_oracle},
        {"compositing conservation", conservation},
        {"rigid invariance", rigid_invariance},
        {"SSIM self-test", ssim_check},
        {"performance benchmark", benchmark},
        {"determinism", [&] { return determinism(cli); }},
        {"end-to-end smoke", [&] { return end_to_end(cli); }},
    };
    int failures = 0;
    for (int n : selected) {
        const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
