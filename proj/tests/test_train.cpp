// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#include "coin/coin.hpp"
#include "coin/synth.hpp"

#include <gtest/gtest.h>

using namespace coin;

namespace {

ViewDataset<float> small_dataset(std::uint64_t seed, int views = 6, int size = 24) {
    return render_views(make_scene<float>(seed, 300), views, size);
}

TrainConfig small_config(long p1, long p2) {
    TrainConfig cfg;
    cfg.phase1_iters = p1;
    cfg.phase2_iters = p2;
    cfg.gaussians_per_face = 1;
    cfg.hidden_width = 16;
    cfg.embed_dim = 4;
    cfg.pos_freqs = 2;
    cfg.log_every = 1;
    return cfg;
}

double max_abs_offset(const CoinModel<float>& m, int view) { return m.offsets(view).cwiseAbs().maxCoeff(); }

} // namespace

TEST(Trainer, NoPhaseTwoLeavesOffsetsZero) {
    const auto ds = small_dataset(1);
    Trainer<float> t(ds, small_config(30, 0));
    t.run();
    for (int id : ds.ids()) {
        EXPECT_EQ(max_abs_offset(t.model(), id), 0.0f);
    }
    EXPECT_EQ(t.history().size(), 30u);
    for (const auto& r : t.history()) {
        EXPECT_EQ(r.phase, 1);
        EXPECT_EQ(r.l_reg, 0.0);
    }
}

TEST(Trainer, PhaseOneReducesLoss) {
    const auto ds = small_dataset(2);
    auto cfg = small_config(300, 0);
    Trainer<float> t(ds, cfg);
    t.run();
    const auto& h = t.history();
    // mean over the first and last epochs so the view mix is identical
    const std::size_t nv = ds.size();
    double first = 0, last = 0;
    for (std::size_t i = 0; i < nv; ++i) {
        first += h[i].total;
        last += h[h.size() - 1 - i].total;
    }
    EXPECT_LE(last, 0.2 * first) << "first epoch " << first / nv << " last " << last / nv;
}

TEST(Trainer, VisitsEveryViewOncePerEpoch) {
    const auto ds = small_dataset(3, 5);
    Trainer<float> t(ds, small_config(10, 10));
    for (long epoch = 0; epoch < 3; ++epoch) {
        std::vector<int> seen(ds.size(), 0);
        for (std::size_t k = 0; k < ds.size(); ++k) {
            ++seen[t.view_at(epoch * long(ds.size()) + long(k))];
        }
        for (int s : seen) {
            EXPECT_EQ(s, 1);
        }
    }
}

TEST(Trainer, DeterministicAcrossRunsAndThreads) {
    const auto ds = small_dataset(4);
    const auto cfg = small_config(10, 20);
    Trainer<float> a(ds, cfg);
    a.run();
    ThreadPool pool(3);
    Trainer<float> b(ds, cfg, &pool);
    b.run();
    EXPECT_EQ(checkpoint_bytes(a.checkpoint()), checkpoint_bytes(b.checkpoint()));
    ASSERT_EQ(a.history().size(), b.history().size());
    for (std::size_t i = 0; i < a.history().size(); ++i) {
        EXPECT_EQ(a.history()[i].csv_row(), b.history()[i].csv_row());
    }
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
    const auto ds = small_dataset(5);
    const auto cfg = small_config(10, 20);
    Trainer<float> full(ds, cfg);
    full.run();

    Trainer<float> first(ds, cfg);
    for (int i = 0; i < 17; ++i) {
        first.step();
    }
    const auto bytes = checkpoint_bytes(first.checkpoint());
    Trainer<float> resumed(ds, cfg, parse_checkpoint<float>(bytes));
    EXPECT_EQ(resumed.iteration(), 17);
    resumed.run();

    const auto& hf = full.history();
    const auto& hr = resumed.history();
    ASSERT_EQ(hr.size(), hf.size() - 17);
    for (std::size_t i = 0; i < hr.size(); ++i) {
        EXPECT_NEAR(hr[i].total, hf[i + 17].total, 1e-6);
        EXPECT_NEAR(hr[i].l_pixel, hf[i + 17].l_pixel, 1e-6);
    }
    EXPECT_EQ(checkpoint_bytes(resumed.checkpoint()), checkpoint_bytes(full.checkpoint()));
}

TEST(Trainer, CleanDataKeepsOffsetsSmall) {
    const auto ds = small_dataset(6);
    Trainer<float> t(ds, small_config(100, 300));
    t.run();
    double sum = 0;
    for (int id : ds.ids()) {
        sum += t.model().offsets(id).cwiseAbs().mean();
    }
    EXPECT_LE(sum / double(ds.size()), 0.01);
}

TEST(Trainer, BaselineNeverTouchesMlp) {
    const auto ds = small_dataset(7);
    auto cfg = small_config(5, 15);
    cfg.coin = false;
    Trainer<float> t(ds, cfg);
    const auto theta0 = t.model().mlp.theta();
    const auto emb0 = t.model().embeddings.values();
    t.run();
    EXPECT_EQ(t.model().mlp.theta(), theta0);
    EXPECT_EQ(t.model().embeddings.values(), emb0);
    for (const auto& r : t.history()) {
        EXPECT_EQ(r.l_reg, 0.0);
    }
}

TEST(Trainer, RejectsBadDatasets) {
    auto ds = small_dataset(8, 2);
    const auto cfg = small_config(1, 1);
    auto one = ds;
    one.views.resize(1);
    EXPECT_THROW(Trainer<float>(one, cfg), Error);
    auto bad_ref = ds;
    bad_ref.reference_id = 42;
    EXPECT_THROW(Trainer<float>(bad_ref, cfg), Error);
    auto no_mesh = ds;
    no_mesh.mesh.reset();
    EXPECT_THROW(Trainer<float>(no_mesh, cfg), Error);
}
