// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#include "coin/depth_warp.hpp"
#include "warp_oracle.hpp"

#include <gtest/gtest.h>

using namespace coin;

namespace {

Intrinsics<double> small_k(int w = 32, int h = 24) { return {40.0, 40.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h}; }

Image<double> random_image(Rng& rng, int w, int h, int ch = 3) {
    Image<double> img(w, h, ch);
    for (auto& v : img.data()) {
        v = rng.uniform();
    }
    return img;
}

DepthImage<double> constant_depth(int w, int h, double z) { return DepthImage<double>(Image<double>(w, h, 1, z)); }

RigidTransform<double> translation(double x, double y, double z) {
    RigidTransform<double> t;
    t.translation = Vec3<double>(x, y, z);
    return t;
}

} // namespace

TEST(DepthWarp, IdentityIsBitExact) {
    Rng rng(3);
    const Camera<double> cam(small_k(), RigidTransform<double>{});
    const auto img = random_image(rng, 32, 24);
    const auto depth = constant_depth(32, 24, 2.5);
    const auto out = warp(img, depth, cam, cam, depth);
    EXPECT_EQ(out.image, img);
    for (double m : out.mask.weights.data()) {
        EXPECT_EQ(m, 1.0);
    }
}

TEST(DepthWarp, FrontoParallelPlaneShift) {
    // plane at z = 5, target shifted by t along x: shift of fx * t / 5 = 2 px
    Rng rng(4);
    const int w = 32, h = 24;
    const Camera<double> anchor(small_k(w, h), RigidTransform<double>{});
    const Camera<double> target(small_k(w, h), translation(-0.25, 0, 0));
    const auto img = random_image(rng, w, h);
    const auto depth = constant_depth(w, h, 5.0);
    const auto out = warp(img, depth, anchor, target, depth);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 2 < w) {
                ASSERT_EQ(out.mask.weights(y, x), 1.0) << x << "," << y;
                for (int c = 0; c < 3; ++c) {
                    EXPECT_NEAR(out.image(y, x, c), img(y, x + 2, c), 1e-12);
                }
            } else {
                EXPECT_EQ(out.mask.weights(y, x), 0.0);
                EXPECT_EQ(out.image(y, x, 0), 0.0);
            }
        }
    }
}

TEST(DepthWarp, TwoPlaneOcclusionMatchesOracle) {
    const oracle::TwoPlaneScene scene;
    const int w = 48, h = 40;
    const Intrinsics<double> k{44.0, 44.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
    const Camera<double> anchor(k, look_at<double>(Vec3<double>(0, 0, 0), Vec3<double>(0, 0, 1)));
    for (const auto& eye : {Vec3<double>(0.4, 0, 0), Vec3<double>(-0.3, 0.2, 0.1), Vec3<double>(0.15, -0.25, -0.2)}) {
        const Camera<double> target(k, look_at<double>(eye, Vec3<double>(0.05, 0, 5)));
        const auto [a_img, a_depth] = scene.render(anchor);
        const auto [t_img, t_depth] = scene.render(target);
        const auto out = warp(a_img, a_depth, anchor, target, t_depth);
        const auto ref = oracle::brute_force_warp(a_img, a_depth, anchor, target, t_depth, 0.01L);
        int visible = 0, hidden = 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t px = static_cast<std::size_t>(y) * w + x;
                ASSERT_EQ(out.mask.weights(y, x), ref.visible[px] ? 1.0 : 0.0) << x << "," << y;
                (ref.visible[px] ? visible : hidden)++;
                for (int c = 0; c < 3; ++c) {
                    EXPECT_NEAR(out.image(y, x, c), double(ref.image[px * 3 + c]), 1e-6);
                }
            }
        }
        // the card must occlude part of the far wall from every target pose
        EXPECT_GT(visible, w * h / 2);
        EXPECT_GT(hidden, 0);
    }
}

TEST(DepthWarp, RigidEquivariance) {
    const oracle::TwoPlaneScene scene;
    const Intrinsics<double> k = small_k(40, 32);
    const Camera<double> anchor(k, RigidTransform<double>{});
    const Camera<double> target(k, look_at<double>(Vec3<double>(0.3, 0.1, 0), Vec3<double>(0, 0, 5)));
    const auto [a_img, a_depth] = scene.render(anchor);
    const auto [t_img, t_depth] = scene.render(target);
    const auto base = warp(a_img, a_depth, anchor, target, t_depth);

    RigidTransform<double> g;
    g.rotation = Eigen::AngleAxisd(0.7, Vec3<double>(1, 2, 3).normalized()).toRotationMatrix();
    g.translation = Vec3<double>(1.5, -2, 0.3);
    const RigidTransform<double> g_inv = g.inverse();
    const Camera<double> anchor2(k, anchor.pose.compose(g_inv));
    const Camera<double> target2(k, target.pose.compose(g_inv));
    const auto moved = warp(a_img, a_depth, anchor2, target2, t_depth);
    EXPECT_EQ(moved.mask.weights, base.mask.weights);
    for (std::size_t i = 0; i < base.image.size(); ++i) {
        EXPECT_NEAR(moved.image.data()[i], base.image.data()[i], 1e-9);
    }
}

TEST(DepthWarp, InvalidDepthIsInvisible) {
    Rng rng(5);
    const Camera<double> cam(small_k(), RigidTransform<double>{});
    const auto img = random_image(rng, 32, 24);
    Image<double> d(32, 24, 1, 2.0);
    d(5, 7) = 0;
    d(9, 9) = std::numeric_limits<double>::quiet_NaN();
    const DepthImage<double> depth(d);
    const auto out = warp(img, depth, cam, cam, depth);
    EXPECT_EQ(out.mask.weights(5, 7), 0.0);
    EXPECT_EQ(out.mask.weights(9, 9), 0.0);
    EXPECT_EQ(out.mask.weights(5, 8), 1.0);
}

TEST(DepthWarp, ThreadedMatchesSerial) {
    const oracle::TwoPlaneScene scene;
    const Intrinsics<double> k = small_k(40, 32);
    const Camera<double> anchor(k, RigidTransform<double>{});
    const Camera<double> target(k, look_at<double>(Vec3<double>(-0.3, 0.1, 0), Vec3<double>(0, 0, 5)));
    const auto [a_img, a_depth] = scene.render(anchor);
    const auto [t_img, t_depth] = scene.render(target);
    ThreadPool pool(4);
    const auto serial = warp(a_img, a_depth, anchor, target, t_depth);
    const auto threaded = warp(a_img, a_depth, anchor, target, t_depth, 0.01, &pool);
    EXPECT_EQ(serial.image, threaded.image);
    EXPECT_EQ(serial.mask.weights, threaded.mask.weights);
}

TEST(DepthWarp, Errors) {
    const Camera<double> cam(small_k(), RigidTransform<double>{});
    const auto img = Image<double>(32, 24, 3);
    const auto depth = constant_depth(32, 24, 1);
    const auto bad_depth = constant_depth(31, 24, 1);
    try {
        warp(img, bad_depth, cam, cam, depth);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
    try {
        warp(img, depth, cam, cam, bad_depth);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
    try {
        warp(img, depth, cam, cam, depth, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
    }
    EXPECT_THROW(DepthImage<double>(Image<double>(4, 4, 3)), Error);
}

TEST(SoftenMask, AllOnesUnchanged) {
    VisibilityMask<double> m{Image<double>(9, 7, 1, 1.0)};
    EXPECT_EQ(soften_mask(m, 2).weights, m.weights);
}

TEST(SoftenMask, SingleHoleRing) {
    VisibilityMask<double> m{Image<double>(9, 9, 1, 1.0)};
    m.weights(4, 4) = 0;
    const auto s = soften_mask(m, 1);
    int boundary = 0;
    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 9; ++x) {
            const double v = s.weights(y, x);
            if (y == 4 && x == 4) {
                EXPECT_EQ(v, 0.0);
            } else if (std::abs(y - 4) <= 1 && std::abs(x - 4) <= 1) {
                EXPECT_EQ(v, kBoundaryWeight);
                ++boundary;
            } else {
                EXPECT_EQ(v, 1.0);
            }
        }
    }
    EXPECT_EQ(boundary, 8);
}

TEST(SoftenMask, IdempotentAndThreeValued) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        VisibilityMask<double> m{Image<double>(17, 13, 1)};
        for (auto& v : m.weights.data()) {
            v = rng.uniform() < 0.8 ? 1.0 : 0.0;
        }
        const int band = 1 + trial % 3;
        const auto once = soften_mask(m, band);
        EXPECT_EQ(soften_mask(once, band).weights, once.weights);
        for (double v : once.weights.data()) {
            EXPECT_TRUE(v == 0.0 || v == kBoundaryWeight || v == 1.0);
        }
        // brute force Chebyshev neighbourhood
        for (int y = 0; y < 13; ++y) {
            for (int x = 0; x < 17; ++x) {
                if (m.weights(y, x) == 0) {
                    EXPECT_EQ(once.weights(y, x), 0.0);
                    continue;
                }
                bool near = false;
                for (int yy = 0; yy < 13; ++yy) {
                    for (int xx = 0; xx < 17; ++xx) {
                        near = near || (m.weights(yy, xx) == 0 && std::abs(yy - y) <= band && std::abs(xx - x) <= band);
                    }
                }
                EXPECT_EQ(once.weights(y, x), near ? kBoundaryWeight : 1.0);
            }
        }
    }
    EXPECT_THROW(soften_mask(VisibilityMask<double>{Image<double>(3, 3, 1)}, 0), Error);
}

TEST(Blend, Examples) {
    Image<double> warped(2, 1, 3, 1.0), base(2, 1, 3, 0.5);
    VisibilityMask<double> m{Image<double>(2, 1, 1)};
    m.weights(0, 0) = kBoundaryWeight;
    m.weights(0, 1) = 1.0;
    const auto out = blend(warped, base, m);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(out(0, 0, c), 0.1 * 1.0 + 0.9 * 0.5, 1e-7);
        EXPECT_EQ(out(0, 1, c), 1.0);
    }
    m.weights(0, 1) = 0.0;
    EXPECT_EQ(blend(warped, base, m)(0, 1, 2), 0.5);
    EXPECT_THROW(blend(warped, Image<double>(3, 1, 3), m), Error);
}
