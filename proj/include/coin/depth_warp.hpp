// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/camera.hpp"
#include "coin/image.hpp"
#include "coin/parallel.hpp"

#include <cmath>
#include <vector>

namespace coin {

/// Per-pixel camera-frame depth plus validity. Valid pixels have depth > 0.
template <typename T> struct DepthImage {
    Image<T> depth;
    std::vector<std::uint8_t> valid;

    DepthImage() = default;

    /// Pixels with depth > 0 (and finite) are valid.
    explicit DepthImage(Image<T> d) : depth(std::move(d)), valid(depth.pixel_count(), 0) {
        if (depth.channels() != 1) {
            throw Error(ErrorCode::DimensionMismatch, "depth image must have one channel");
        }
        for (std::size_t i = 0; i < valid.size(); ++i) {
            valid[i] = std::isfinite(depth.data()[i]) && depth.data()[i] > T(0);
        }
    }

    int width() const { return depth.width(); }
    int height() const { return depth.height(); }
    bool is_valid(int y, int x) const { return valid[static_cast<std::size_t>(y) * depth.width() + x] != 0; }
};

/// Weights in [0,1]: 1 visible, 0 occluded or out of frame, 0.1 on the
/// softened boundary band.
template <typename T> struct VisibilityMask {
    Image<T> weights;
};

template <typename T> struct WarpResult {
    Image<T> image;
    VisibilityMask<T> mask;
};

inline constexpr double kBoundaryWeight = 0.1;
inline constexpr double kDefaultWarpTolerance = 0.01;

namespace detail {

/// Coordinates this close to an integer are treated as integer so that an
/// identity warp samples exactly one texel.
inline constexpr double kIntegerSnap = 1e-9;

template <typename T> T snap(T v) {
    const T r = std::round(v);
    return std::abs(v - r) < T(kIntegerSnap) ? r : v;
}

struct BilinearTaps {
    int x0, y0, x1, y1;
    double wx, wy;
};

inline BilinearTaps bilinear_taps(double u, double v, int width, int height) {
    u = std::clamp(u, 0.0, double(width - 1));
    v = std::clamp(v, 0.0, double(height - 1));
    const int x0 = static_cast<int>(std::floor(u));
    const int y0 = static_cast<int>(std::floor(v));
    return {x0, y0, std::min(x0 + 1, width - 1), std::min(y0 + 1, height - 1), u - x0, v - y0};
}

} // namespace detail

/// Backward warp of `anchor_img` into the target view. Each target pixel is
/// lifted with `target_depth`, reprojected into the anchor camera and
/// bilinearly sampled. A pixel is visible when the reprojection lands within
/// half a pixel of the frame and the sampled anchor depth agrees with the
/// reprojected depth to `tol` relative error. Invisible pixels are black with
/// weight 0.
template <typename T>
WarpResult<T> warp(const Image<T>& anchor_img, const DepthImage<T>& anchor_depth, const Camera<T>& anchor_cam,
                   const Camera<T>& target_cam, const DepthImage<T>& target_depth, T tol = T(kDefaultWarpTolerance),
                   ThreadPool* pool = nullptr) {
    if (anchor_img.width() != anchor_cam.width || anchor_img.height() != anchor_cam.height ||
        anchor_depth.width() != anchor_cam.width || anchor_depth.height() != anchor_cam.height) {
        throw Error(ErrorCode::DimensionMismatch, "anchor image/depth do not match the anchor camera");
    }
    if (target_depth.width() != target_cam.width || target_depth.height() != target_cam.height) {
        throw Error(ErrorCode::DimensionMismatch, "target depth does not match the target camera");
    }
    if (!(tol > T(0))) {
        throw Error(ErrorCode::Config, "warp tolerance must be positive");
    }
    const int w = target_cam.width, h = target_cam.height, channels = anchor_img.channels();
    const int aw = anchor_cam.width, ah = anchor_cam.height;
    WarpResult<T> out{Image<T>(w, h, channels), {Image<T>(w, h, 1)}};
    const RigidTransform<T> target_to_anchor = anchor_cam.pose.compose(target_cam.pose.inverse());

    auto row = [&](std::size_t yi) {
        const int y = static_cast<int>(yi);
        for (int x = 0; x < w; ++x) {
            if (!target_depth.is_valid(y, x)) {
                continue;
            }
            const T d = target_depth.depth(y, x);
            const Vec3<T> p_t((T(x) - target_cam.cx) / target_cam.fx * d, (T(y) - target_cam.cy) / target_cam.fy * d, d);
            const Vec3<T> p_a = target_to_anchor.apply(p_t);
            if (!(p_a.z() > T(kMinProjectDepth))) {
                continue;
            }
            const T u = detail::snap(anchor_cam.fx * p_a.x() / p_a.z() + anchor_cam.cx);
            const T v = detail::snap(anchor_cam.fy * p_a.y() / p_a.z() + anchor_cam.cy);
            if (u < T(-0.5) || u > T(aw - 1) + T(0.5) || v < T(-0.5) || v > T(ah - 1) + T(0.5)) {
                continue;
            }
            const auto taps = detail::bilinear_taps(double(u), double(v), aw, ah);
            const T wx = T(taps.wx), wy = T(taps.wy);
            const T w00 = (T(1) - wx) * (T(1) - wy), w10 = wx * (T(1) - wy), w01 = (T(1) - wx) * wy, w11 = wx * wy;
            const bool ok = (w00 == T(0) || anchor_depth.is_valid(taps.y0, taps.x0)) &&
                            (w10 == T(0) || anchor_depth.is_valid(taps.y0, taps.x1)) &&
                            (w01 == T(0) || anchor_depth.is_valid(taps.y1, taps.x0)) &&
                            (w11 == T(0) || anchor_depth.is_valid(taps.y1, taps.x1));
            if (!ok) {
                continue;
            }
            auto sample = [&](const Image<T>& img, int c) {
                T s = T(0);
                if (w00 != T(0)) s += w00 * img(taps.y0, taps.x0, c);
                if (w10 != T(0)) s += w10 * img(taps.y0, taps.x1, c);
                if (w01 != T(0)) s += w01 * img(taps.y1, taps.x0, c);
                if (w11 != T(0)) s += w11 * img(taps.y1, taps.x1, c);
                return s;
            };
            const T sampled_depth = sample(anchor_depth.depth, 0);
            if (!(std::abs(sampled_depth - p_a.z()) <= tol * p_a.z())) {
                continue;
            }
            out.mask.weights(y, x) = T(1);
            for (int c = 0; c < channels; ++c) {
                out.image(y, x, c) = sample(anchor_img, c);
            }
        }
    };
    if (pool) {
        pool->parallel_for(static_cast<std::size_t>(h), row);
    } else {
        for (int y = 0; y < h; ++y) {
            row(static_cast<std::size_t>(y));
        }
    }
    return out;
}

/// Pixels with positive weight within `band` pixels (Chebyshev distance) of a
/// zero-weight pixel get the boundary weight 0.1. Zero stays zero and the
/// rest become 1, so the output only holds {0, 0.1, 1}.
template <typename T> VisibilityMask<T> soften_mask(const VisibilityMask<T>& mask, int band) {
    if (band < 1) {
        throw Error(ErrorCode::Config, "boundary band must be at least one pixel");
    }
    const Image<T>& in = mask.weights;
    const int w = in.width(), h = in.height();
    // distance (Chebyshev) to the nearest zero pixel via two separable passes
    // of a running min; rows first then columns.
    const int far = w + h + 1;
    std::vector<int> row_dist(static_cast<std::size_t>(w) * h, far);
    for (int y = 0; y < h; ++y) {
        int last = -far;
        for (int x = 0; x < w; ++x) {
            if (in(y, x) == T(0)) {
                last = x;
            }
            row_dist[static_cast<std::size_t>(y) * w + x] = x - last;
        }
        last = 2 * far;
        for (int x = w - 1; x >= 0; --x) {
            if (in(y, x) == T(0)) {
                last = x;
            }
            auto& d = row_dist[static_cast<std::size_t>(y) * w + x];
            d = std::min(d, last - x);
        }
    }
    VisibilityMask<T> out{Image<T>(w, h, 1)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (in(y, x) == T(0)) {
                continue;
            }
            bool near_zero = false;
            for (int yy = std::max(0, y - band); yy <= std::min(h - 1, y + band) && !near_zero; ++yy) {
                near_zero = row_dist[static_cast<std::size_t>(yy) * w + x] <= band;
            }
            out.weights(y, x) = near_zero ? T(kBoundaryWeight) : T(1);
        }
    }
    return out;
}

/// out = mask·warped + (1 − mask)·base per pixel and channel.
template <typename T> Image<T> blend(const Image<T>& warped, const Image<T>& base, const VisibilityMask<T>& mask) {
    require_same_shape(warped, base, "blend inputs");
    if (mask.weights.width() != base.width() || mask.weights.height() != base.height()) {
        throw Error(ErrorCode::DimensionMismatch, "mask does not match blend inputs");
    }
    Image<T> out(base.width(), base.height(), base.channels());
    for (int y = 0; y < base.height(); ++y) {
        for (int x = 0; x < base.width(); ++x) {
            const T m = mask.weights(y, x);
            for (int c = 0; c < base.channels(); ++c) {
                out(y, x, c) = m * warped(y, x, c) + (T(1) - m) * base(y, x, c);
            }
        }
    }
    return out;
}

} // namespace coin
