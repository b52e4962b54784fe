// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#include "coin/commands.hpp"
#include "ssim_oracle.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace coin;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("coinsplat_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

cmd::SynthOptions tiny_synth(const fs::path& out, int views = 3) {
    cmd::SynthOptions o;
    o.out = out;
    o.seed = 5;
    o.views = views;
    o.heldout = 2;
    o.size = 20;
    o.gaussians = 200;
    return o;
}

cmd::TrainOptions tiny_train(const fs::path& data, const fs::path& out, long p2) {
    cmd::TrainOptions o;
    o.data = data;
    o.out = out;
    o.quiet = true;
    o.config.phase1_iters = 6;
    o.config.phase2_iters = p2;
    o.config.gaussians_per_face = 1;
    o.config.hidden_width = 8;
    o.config.embed_dim = 4;
    o.config.log_every = 2;
    return o;
}

} // namespace

TEST(CliSynth, MinimalDatasetIsTrainable) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds", 2));
    const auto ds = load_dataset<float>(tmp.path / "ds");
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_TRUE(ds.extra.contains("perturbation"));
    cmd::train(tiny_train(tmp.path / "ds", tmp.path / "run", 4));
    EXPECT_TRUE(fs::exists(tmp.path / "run" / "checkpoint.bin"));
}

TEST(CliSynth, SameSeedGivesIdenticalFiles) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "a"));
    cmd::synth(tiny_synth(tmp.path / "b"));
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(tmp.path / "a")) {
        if (e.is_regular_file()) {
            const auto rel = fs::relative(e.path(), tmp.path / "a");
            EXPECT_EQ(slurp(e.path()), slurp(tmp.path / "b" / rel)) << rel;
            ++files;
        }
    }
    EXPECT_GT(files, 10u);
}

TEST(CliSynth, RejectsBadOptions) {
    TempDir tmp;
    auto o = tiny_synth(tmp.path / "ds", 1);
    EXPECT_THROW(cmd::synth(o), Error);
    o = tiny_synth(tmp.path / "ds");
    o.perturb.affine_sigma = -1;
    EXPECT_THROW(cmd::synth(o), Error);
}

TEST(CliTrain, LogRowsMatchLoggedIterations) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    cmd::train(tiny_train(tmp.path / "ds", tmp.path / "run", 5));
    std::ifstream in(tmp.path / "run" / "losses.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, LossReport::csv_header());
    long rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, 6); // iterations 0, 2, ..., 10
}

TEST(CliTrain, CheckpointsAndResume) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    auto o = tiny_train(tmp.path / "ds", tmp.path / "full", 6);
    o.config.checkpoint_every = 4;
    cmd::train(o);
    ASSERT_TRUE(fs::exists(cmd::checkpoint_path(tmp.path / "full", 8)));
    auto r = tiny_train(tmp.path / "ds", tmp.path / "resumed", 6);
    r.config.checkpoint_every = 4;
    r.resume = cmd::checkpoint_path(tmp.path / "full", 8);
    cmd::train(r);
    EXPECT_EQ(slurp(tmp.path / "full" / "checkpoint.bin"), slurp(tmp.path / "resumed" / "checkpoint.bin"));
}

TEST(CliRender, ZeroOffsetModesAgreeAndSizesMatch) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    cmd::train(tiny_train(tmp.path / "ds", tmp.path / "run", 0));
    cmd::RenderCommandOptions ro;
    ro.checkpoint = tmp.path / "run" / "checkpoint.bin";
    ro.cameras = tmp.path / "ds" / "heldout";
    ro.out = tmp.path / "c";
    cmd::render(ro);
    ro.mode = ViewMode::ReferenceEmbedding;
    ro.out = tmp.path / "r";
    cmd::render(ro);
    for (int id : {0, 1}) {
        const auto name = view_stem(id) + ".png";
        const auto img = read_png<float>(tmp.path / "c" / name);
        EXPECT_EQ(img.width(), 20);
        EXPECT_EQ(img.height(), 20);
        EXPECT_EQ(slurp(tmp.path / "c" / name), slurp(tmp.path / "r" / name));
    }
    EXPECT_TRUE(fs::exists(tmp.path / "c" / "render_stats.json"));
    ro.view = 99;
    EXPECT_THROW(cmd::render(ro), Error);
}

TEST(CliEval, IdenticalSetsAreCapped) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    cmd::EvalOptions eo;
    eo.renders = tmp.path / "ds" / "images";
    eo.truth = tmp.path / "ds";
    const Json rep = cmd::eval(eo);
    EXPECT_EQ(rep["count"].get<int>(), 3);
    EXPECT_EQ(rep["mean_psnr"].get<double>(), kPsnrCap);
    EXPECT_EQ(rep["mean_ssim"].get<double>(), 1.0);
}

TEST(CliEval, MatchesIndependentRecomputation) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    cmd::EvalOptions eo;
    eo.renders = tmp.path / "ds" / "clean";
    eo.truth = tmp.path / "ds";
    const Json rep = cmd::eval(eo);
    for (const auto& v : rep["views"]) {
        const int id = v["id"].get<int>();
        const auto a = read_png<double>(tmp.path / "ds" / "clean" / "images" / (view_stem(id) + ".png"));
        const auto b = read_png<double>(tmp.path / "ds" / "images" / (view_stem(id) + ".png"));
        // PNG values are already 8-bit levels, so plain MSE is the reference
        long double se = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const long double d = std::round(a.data()[i] * 255.0L) - std::round(b.data()[i] * 255.0L);
            se += d * d;
        }
        const long double mse = se / (255.0L * 255.0L) / a.size();
        const double expect_psnr = mse == 0 ? kPsnrCap : double(-10.0L * std::log10(mse));
        EXPECT_NEAR(v["psnr"].get<double>(), expect_psnr, 1e-6) << id;
        EXPECT_NEAR(v["ssim"].get<double>(), double(coin::oracle::reference_ssim(a, b)), 1e-6) << id;
    }
}

TEST(CliEval, MissingViewsAreListed) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    fs::create_directories(tmp.path / "r");
    fs::copy_file(tmp.path / "ds" / "images" / "001.png", tmp.path / "r" / "001.png");
    cmd::EvalOptions eo;
    eo.renders = tmp.path / "r";
    eo.truth = tmp.path / "ds";
    try {
        cmd::eval(eo);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("missing views: 0 2"), std::string::npos) << e.what();
    }
}

TEST(CliWarp, IdentityWarpReproducesAnchor) {
    TempDir tmp;
    cmd::synth(tiny_synth(tmp.path / "ds"));
    cmd::WarpOptions wo;
    wo.anchor = tmp.path / "ds" / "images" / "001.png";
    wo.anchor_depth = wo.target_depth = tmp.path / "ds" / "depth" / "001.pfm";
    wo.anchor_cam = wo.target_cam = tmp.path / "ds" / "cameras.json";
    wo.anchor_id = wo.target_id = 1;
    wo.band = 0;
    wo.out_image = tmp.path / "w.png";
    wo.out_mask = tmp.path / "m.pfm";
    cmd::warp(wo);
    const auto anchor = read_png<float>(wo.anchor);
    const auto warped = read_png<float>(wo.out_image);
    const auto mask = read_pfm<float>(wo.out_mask);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (mask.data()[p] == 1.0f) {
            for (int c = 0; c < 3; ++c) {
                EXPECT_EQ(warped.data()[p * 3 + c], anchor.data()[p * 3 + c]);
            }
        }
    }
    wo.target_id = 17;
    EXPECT_THROW(cmd::warp(wo), Error);
}

TEST(CliBench, ImageIndependentOfThreads) {
    cmd::BenchOptions bo;
    bo.gaussians = 500;
    bo.size = 64;
    bo.repeats = 3;
    const Json one = cmd::bench(bo);
    ThreadPool pool(4);
    const Json four = cmd::bench(bo, &pool);
    EXPECT_TRUE(one["deterministic"].get<bool>());
    EXPECT_EQ(one["image_hash"], four["image_hash"]);
    EXPECT_GT(one["median_ms"].get<double>(), 0.0);
}
