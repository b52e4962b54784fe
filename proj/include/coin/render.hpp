// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/camera.hpp"
#include "coin/image.hpp"
#include "coin/parallel.hpp"
#include "coin/scene.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace coin {

template <typename T> struct RenderOptions {
    T near_plane = T(0.01);
    T cov2d_floor = T(0.3);
    /// Footprint radius in standard deviations: a Gaussian contributes to a
    /// pixel only when its Mahalanobis distance is within this bound.
    T sigma_cutoff = T(3);
    T min_transmittance = T(1e-4);
    int tile_size = 16;
};

struct RenderStats {
    std::size_t gaussian_count = 0;
    std::size_t culled_count = 0;
    std::size_t skipped_count = 0;
    std::size_t tile_entries = 0;
    double project_ms = 0;
    double sort_ms = 0;
    double bin_ms = 0;
    double raster_ms = 0;

    double total_ms() const { return project_ms + sort_ms + bin_ms + raster_ms; }
};

template <typename T> struct RenderOutput {
    Image<T> color; // H×W×3
    Image<T> depth; // H×W, alpha-weighted expected camera z
    Image<T> alpha; // H×W accumulated opacity
    Image<T> transmittance; // H×W, transmittance left after compositing
    RenderStats stats;
};

/// Screen-space footprint of one Gaussian.
template <typename T> struct Splat2D {
    Vec2<T> mean;
    Mat2<T> cov;
    T depth;
};

/// EWA projection: cov2d = J W Σ Wᵀ Jᵀ + floor·I. Returns nullopt when the
/// Gaussian is culled (behind the near plane or footprint outside the image).
template <typename T>
std::optional<Splat2D<T>> project_gaussian(const Gaussian3D<T>& g, const Camera<T>& cam,
                                           const RenderOptions<T>& opt = {}) {
    const Vec3<T> p = cam.pose.apply(g.position);
    if (!(p.z() > opt.near_plane)) {
        return std::nullopt;
    }
    const T z = p.z();
    Mat23<T> j;
    j << cam.fx / z, T(0), -cam.fx * p.x() / (z * z), T(0), cam.fy / z, -cam.fy * p.y() / (z * z);
    const Mat23<T> jw = j * cam.pose.rotation;
    Mat2<T> cov = jw * covariance(g) * jw.transpose();
    cov(1, 0) = cov(0, 1);
    cov(0, 0) += opt.cov2d_floor;
    cov(1, 1) += opt.cov2d_floor;
    const Vec2<T> mean(cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy);
    const T rx = opt.sigma_cutoff * std::sqrt(cov(0, 0));
    const T ry = opt.sigma_cutoff * std::sqrt(cov(1, 1));
    if (!(mean.x() + rx >= T(0) && mean.x() - rx <= T(cam.width - 1) && mean.y() + ry >= T(0) &&
          mean.y() - ry <= T(cam.height - 1))) {
        return std::nullopt;
    }
    return Splat2D<T>{mean, cov, z};
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline constexpr double kMinCovDet = 1e-12;

} // namespace detail

/// Everything the backward pass needs from a forward render.
template <typename T> struct ForwardState {
    Camera<T> camera;
    Vec3<T> background = Vec3<T>::Zero();
    RenderOptions<T> options;
    int tiles_x = 0;
    int tiles_y = 0;

    // Per Gaussian (indexed by scene index); `visible` marks splats that were
    // neither culled nor skipped.
    std::vector<std::uint8_t> visible;
    std::vector<Vec3<T>> cam_point;
    std::vector<Mat2<T>> cov2d;
    std::vector<T> mean_x, mean_y, conic_a, conic_b, conic_c, opacity, depth;
    std::vector<T> color_r, color_g, color_b;

    // Tile lists in front-to-back order, flattened.
    std::vector<std::uint32_t> tile_offsets;
    std::vector<std::uint32_t> tile_entries;

    // Per pixel: number of tile-list entries traversed before termination.
    std::vector<std::uint32_t> n_traversed;
};

/// Tile-based forward/backward splatting rasterizer.
template <typename T> class Rasterizer {
public:
    explicit Rasterizer(RenderOptions<T> options = {}, ThreadPool* pool = nullptr) : opt_(options), pool_(pool) {}

    const RenderOptions<T>& options() const { return opt_; }

    /// Renders `gaussians` with per-Gaussian `colors` (the Gaussians' own
    /// colors when `colors` is empty). Fills `state` for a later backward.
    RenderOutput<T> forward(std::span<const Gaussian3D<T>> gaussians, std::span<const Vec3<T>> colors,
                            const Camera<T>& cam, const Vec3<T>& background, ForwardState<T>* state = nullptr) const {
        if (!colors.empty() && colors.size() != gaussians.size()) {
            throw Error(ErrorCode::DimensionMismatch, "color count differs from Gaussian count");
        }
        ForwardState<T> local;
        ForwardState<T>& st = state ? *state : local;
        RenderOutput<T> out;
        out.stats.gaussian_count = gaussians.size();

        auto t0 = std::chrono::steady_clock::now();
        preprocess(gaussians, colors, cam, background, st, out.stats);
        out.stats.project_ms = detail::ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        std::vector<std::uint32_t> order;
        order.reserve(gaussians.size());
        for (std::uint32_t i = 0; i < gaussians.size(); ++i) {
            if (st.visible[i]) {
                order.push_back(i);
            }
        }
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
            return st.depth[a] < st.depth[b] || (st.depth[a] == st.depth[b] && a < b);
        });
        out.stats.sort_ms = detail::ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        bin(order, st);
        out.stats.tile_entries = st.tile_entries.size();
        out.stats.bin_ms = detail::ms_since(t0);

        t0 = std::chrono::steady_clock::now();
        rasterize(st, out);
        out.stats.raster_ms = detail::ms_since(t0);
        return out;
    }

    RenderOutput<T> forward(std::span<const Gaussian3D<T>> gaussians, const Camera<T>& cam,
                            const Vec3<T>& background, ForwardState<T>* state = nullptr) const {
        return forward(gaussians, {}, cam, background, state);
    }

    /// Exact gradients of sum(d_color ⊙ color) w.r.t. every Gaussian
    /// parameter and color. Culled Gaussians get zero gradients.
    GradientBuffer<T> backward(const ForwardState<T>& st, std::span<const Gaussian3D<T>> gaussians,
                               const Image<T>& d_color) const {
        const Camera<T>& cam = st.camera;
        if (d_color.width() != cam.width || d_color.height() != cam.height || d_color.channels() != 3) {
            throw Error(ErrorCode::DimensionMismatch, "upstream gradient must be H×W×3 of the rendered camera");
        }
        if (st.visible.size() != gaussians.size()) {
            throw Error(ErrorCode::DimensionMismatch, "forward state does not match the Gaussian set");
        }
        const std::size_t n_tiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;
        // Per tile-entry partials: mean(2), conic(3 = xx, xy, yy), opacity, color(3).
        constexpr int kStride = 9;
        std::vector<T> partial(st.tile_entries.size() * kStride, T(0));
        run(n_tiles, [&](std::size_t t) { backward_tile(st, d_color, t, partial); });

        // Deterministic reduction: tiles in index order.
        std::vector<std::array<T, kStride>> acc(gaussians.size());
        for (auto& a : acc) {
            a.fill(T(0));
        }
        for (std::size_t e = 0; e < st.tile_entries.size(); ++e) {
            auto& a = acc[st.tile_entries[e]];
            for (int k = 0; k < kStride; ++k) {
                a[k] += partial[e * kStride + k];
            }
        }

        GradientBuffer<T> grads(gaussians.size());
        run(gaussians.size(), [&](std::size_t i) {
            if (!st.visible[i]) {
                return;
            }
            grads[i] = project_backward(gaussians[i], cam, st, i, acc[i]);
            if (!grads[i].finite()) {
                throw Error(ErrorCode::NonFiniteGradient, "Gaussian " + std::to_string(i));
            }
        });
        return grads;
    }

private:
    void run(std::size_t n, const std::function<void(std::size_t)>& fn) const {
        if (pool_) {
            pool_->parallel_for(n, fn);
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                fn(i);
            }
        }
    }

    void preprocess(std::span<const Gaussian3D<T>> gaussians, std::span<const Vec3<T>> colors, const Camera<T>& cam,
                    const Vec3<T>& background, ForwardState<T>& st, RenderStats& stats) const {
        const std::size_t n = gaussians.size();
        st.camera = cam;
        st.background = background;
        st.options = opt_;
        st.visible.assign(n, 0);
        st.cam_point.resize(n);
        st.cov2d.resize(n);
        for (auto* v : {&st.mean_x, &st.mean_y, &st.conic_a, &st.conic_b, &st.conic_c, &st.opacity, &st.depth,
                        &st.color_r, &st.color_g, &st.color_b}) {
            v->assign(n, T(0));
        }
        std::vector<std::uint8_t> skipped(n, 0);
        run(n, [&](std::size_t i) {
            const Gaussian3D<T>& g = gaussians[i];
            const auto splat = project_gaussian(g, cam, opt_);
            if (!splat) {
                return;
            }
            const T det = splat->cov(0, 0) * splat->cov(1, 1) - splat->cov(0, 1) * splat->cov(0, 1);
            if (!(det >= T(detail::kMinCovDet)) || !splat->mean.allFinite()) {
                skipped[i] = 1;
                return;
            }
            st.visible[i] = 1;
            st.cam_point[i] = cam.pose.apply(g.position);
            st.cov2d[i] = splat->cov;
            st.mean_x[i] = splat->mean.x();
            st.mean_y[i] = splat->mean.y();
            st.conic_a[i] = splat->cov(1, 1) / det;
            st.conic_b[i] = -splat->cov(0, 1) / det;
            st.conic_c[i] = splat->cov(0, 0) / det;
            st.opacity[i] = g.opacity();
            st.depth[i] = splat->depth;
            const Vec3<T>& c = colors.empty() ? g.color : colors[i];
            st.color_r[i] = c.x();
            st.color_g[i] = c.y();
            st.color_b[i] = c.z();
        });
        std::size_t visible = 0, skip = 0;
        for (std::size_t i = 0; i < n; ++i) {
            visible += st.visible[i];
            skip += skipped[i];
        }
        stats.skipped_count = skip;
        stats.culled_count = n - visible - skip;
    }

    /// Inclusive pixel range covered by the footprint's bounding box.
    std::array<int, 4> pixel_rect(const ForwardState<T>& st, std::size_t i) const {
        const T rx = opt_.sigma_cutoff * std::sqrt(st.cov2d[i](0, 0));
        const T ry = opt_.sigma_cutoff * std::sqrt(st.cov2d[i](1, 1));
        const int x0 = std::max(0, static_cast<int>(std::ceil(st.mean_x[i] - rx)));
        const int x1 = std::min(st.camera.width - 1, static_cast<int>(std::floor(st.mean_x[i] + rx)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(st.mean_y[i] - ry)));
        const int y1 = std::min(st.camera.height - 1, static_cast<int>(std::floor(st.mean_y[i] + ry)));
        return {x0, y0, x1, y1};
    }

    void bin(const std::vector<std::uint32_t>& order, ForwardState<T>& st) const {
        const int ts = opt_.tile_size;
        st.tiles_x = (st.camera.width + ts - 1) / ts;
        st.tiles_y = (st.camera.height + ts - 1) / ts;
        const std::size_t n_tiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;
        std::vector<std::array<int, 4>> rects(order.size());
        std::vector<std::uint32_t> counts(n_tiles + 1, 0);
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto r = pixel_rect(st, order[k]);
            rects[k] = r;
            if (r[0] > r[2] || r[1] > r[3]) {
                continue;
            }
            for (int ty = r[1] / ts; ty <= r[3] / ts; ++ty) {
                for (int tx = r[0] / ts; tx <= r[2] / ts; ++tx) {
                    ++counts[static_cast<std::size_t>(ty) * st.tiles_x + tx];
                }
            }
        }
        st.tile_offsets.assign(n_tiles + 1, 0);
        for (std::size_t t = 0; t < n_tiles; ++t) {
            st.tile_offsets[t + 1] = st.tile_offsets[t] + counts[t];
        }
        st.tile_entries.assign(st.tile_offsets[n_tiles], 0);
        std::vector<std::uint32_t> cursor(st.tile_offsets.begin(), st.tile_offsets.end() - 1);
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& r = rects[k];
            if (r[0] > r[2] || r[1] > r[3]) {
                continue;
            }
            for (int ty = r[1] / ts; ty <= r[3] / ts; ++ty) {
                for (int tx = r[0] / ts; tx <= r[2] / ts; ++tx) {
                    st.tile_entries[cursor[static_cast<std::size_t>(ty) * st.tiles_x + tx]++] = order[k];
                }
            }
        }
    }

    struct PackedSplat {
        T mx, my, a, b2, c, opacity, r, g, b, depth;
    };

    void rasterize(ForwardState<T>& st, RenderOutput<T>& out) const {
        const Camera<T>& cam = st.camera;
        const int w = cam.width, h = cam.height, ts = opt_.tile_size;
        out.color = Image<T>(w, h, 3);
        out.depth = Image<T>(w, h, 1);
        out.alpha = Image<T>(w, h, 1);
        out.transmittance = Image<T>(w, h, 1);
        st.n_traversed.assign(static_cast<std::size_t>(w) * h, 0);
        const T cutoff2 = opt_.sigma_cutoff * opt_.sigma_cutoff;
        const std::size_t n_tiles = static_cast<std::size_t>(st.tiles_x) * st.tiles_y;

        run(n_tiles, [&](std::size_t t) {
            const int tx = static_cast<int>(t % st.tiles_x), ty = static_cast<int>(t / st.tiles_x);
            const std::uint32_t begin = st.tile_offsets[t], end = st.tile_offsets[t + 1];
            // Contiguous copy of this tile's splats, in compositing order.
            thread_local std::vector<PackedSplat> packed;
            packed.resize(end - begin);
            for (std::uint32_t e = begin; e < end; ++e) {
                const std::uint32_t i = st.tile_entries[e];
                packed[e - begin] = {st.mean_x[i], st.mean_y[i], st.conic_a[i], T(2) * st.conic_b[i], st.conic_c[i],
                                     st.opacity[i], st.color_r[i], st.color_g[i], st.color_b[i], st.depth[i]};
            }
            const std::uint32_t count = end - begin;
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    T trans = T(1);
                    T r = 0, g = 0, b = 0, acc_alpha = 0, acc_depth = 0;
                    std::uint32_t k = 0;
                    for (; k < count; ++k) {
                        const PackedSplat& s = packed[k];
                        const T dx = T(x) - s.mx;
                        const T dy = T(y) - s.my;
                        const T maha = s.a * dx * dx + s.b2 * dx * dy + s.c * dy * dy;
                        if (maha > cutoff2) {
                            continue;
                        }
                        const T alpha = s.opacity * std::exp(T(-0.5) * maha);
                        const T weight = alpha * trans;
                        r += s.r * weight;
                        g += s.g * weight;
                        b += s.b * weight;
                        acc_alpha += weight;
                        acc_depth += s.depth * weight;
                        trans *= (T(1) - alpha);
                        if (trans < opt_.min_transmittance) {
                            ++k;
                            break;
                        }
                    }
                    const std::size_t px = static_cast<std::size_t>(y) * w + x;
                    st.n_traversed[px] = k;
                    out.color(y, x, 0) = r + st.background.x() * trans;
                    out.color(y, x, 1) = g + st.background.y() * trans;
                    out.color(y, x, 2) = b + st.background.z() * trans;
                    out.alpha(y, x) = acc_alpha;
                    out.transmittance(y, x) = trans;
                    out.depth(y, x) = acc_alpha > T(0) ? acc_depth / std::max(acc_alpha, T(1e-8)) : T(0);
                }
            }
        });
    }

    void backward_tile(const ForwardState<T>& st, const Image<T>& d_color, std::size_t t,
                       std::vector<T>& partial) const {
        constexpr int kStride = 9;
        const int w = st.camera.width, h = st.camera.height, ts = opt_.tile_size;
        const int tx = static_cast<int>(t % st.tiles_x), ty = static_cast<int>(t / st.tiles_x);
        const std::uint32_t begin = st.tile_offsets[t];
        const T cutoff2 = opt_.sigma_cutoff * opt_.sigma_cutoff;

        struct Contribution {
            std::uint32_t entry;
            T alpha, trans, dx, dy;
        };
        std::vector<Contribution> contribs;

        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                const std::size_t px = static_cast<std::size_t>(y) * w + x;
                const T gr = d_color(y, x, 0), gg = d_color(y, x, 1), gb = d_color(y, x, 2);
                if (gr == T(0) && gg == T(0) && gb == T(0)) {
                    continue;
                }
                // replay the forward pass to recover per-contribution transmittance
                contribs.clear();
                T trans = T(1);
                for (std::uint32_t e = begin; e < begin + st.n_traversed[px]; ++e) {
                    const std::uint32_t i = st.tile_entries[e];
                    const T dx = T(x) - st.mean_x[i];
                    const T dy = T(y) - st.mean_y[i];
                    const T maha =
                        st.conic_a[i] * dx * dx + T(2) * st.conic_b[i] * dx * dy + st.conic_c[i] * dy * dy;
                    if (maha > cutoff2) {
                        continue;
                    }
                    const T alpha = st.opacity[i] * std::exp(T(-0.5) * maha);
                    contribs.push_back({e, alpha, trans, dx, dy});
                    trans *= (T(1) - alpha);
                }
                // behind-color R: what the pixel would show from this point back
                // with unit transmittance.
                T br = st.background.x(), bg = st.background.y(), bb = st.background.z();
                for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                    const std::uint32_t i = st.tile_entries[it->entry];
                    const T cr = st.color_r[i], cg = st.color_g[i], cb = st.color_b[i];
                    const T weight = it->alpha * it->trans;
                    const T d_alpha = it->trans * (gr * (cr - br) + gg * (cg - bg) + gb * (cb - bb));
                    T* p = &partial[static_cast<std::size_t>(it->entry) * kStride];
                    p[6] += gr * weight;
                    p[7] += gg * weight;
                    p[8] += gb * weight;
                    const T gauss = it->alpha / st.opacity[i];
                    p[5] += d_alpha * gauss;
                    const T d_maha = T(-0.5) * it->alpha * d_alpha;
                    // maha = a dx² + 2b dx dy + c dy², d = pixel - mean
                    p[0] += -d_maha * T(2) * (st.conic_a[i] * it->dx + st.conic_b[i] * it->dy);
                    p[1] += -d_maha * T(2) * (st.conic_b[i] * it->dx + st.conic_c[i] * it->dy);
                    p[2] += d_maha * it->dx * it->dx;
                    p[3] += d_maha * it->dx * it->dy;
                    p[4] += d_maha * it->dy * it->dy;
                    br = cr * it->alpha + (T(1) - it->alpha) * br;
                    bg = cg * it->alpha + (T(1) - it->alpha) * bg;
                    bb = cb * it->alpha + (T(1) - it->alpha) * bb;
                }
            }
        }
    }

    GaussianGrad<T> project_backward(const Gaussian3D<T>& g, const Camera<T>& cam, const ForwardState<T>& st,
                                     std::size_t i, const std::array<T, 9>& a) const {
        GaussianGrad<T> out;
        const Vec3<T>& p = st.cam_point[i];
        const T z = p.z(), z2 = z * z, z3 = z2 * z;
        const Mat3<T>& w = cam.pose.rotation;

        // conic M = cov⁻¹; dL/dcov = -M G M with G = dL/dM (full symmetric)
        Mat2<T> m;
        m << st.conic_a[i], st.conic_b[i], st.conic_b[i], st.conic_c[i];
        Mat2<T> gm;
        gm << a[2], a[3], a[3], a[4];
        const Mat2<T> d_cov2 = -(m * gm * m);

        Mat23<T> j;
        j << cam.fx / z, T(0), -cam.fx * p.x() / z2, T(0), cam.fy / z, -cam.fy * p.y() / z2;
        const Mat23<T> jw = j * w;
        const Mat3<T> cov3 = covariance(g);
        const Mat3<T> d_cov3 = jw.transpose() * d_cov2 * jw;
        const Mat23<T> d_jw = T(2) * d_cov2 * jw * cov3;
        const Mat23<T> d_j = d_jw * w.transpose();

        Vec3<T> d_p;
        d_p.x() = a[0] * cam.fx / z - d_j(0, 2) * cam.fx / z2;
        d_p.y() = a[1] * cam.fy / z - d_j(1, 2) * cam.fy / z2;
        d_p.z() = -a[0] * cam.fx * p.x() / z2 - a[1] * cam.fy * p.y() / z2 - d_j(0, 0) * cam.fx / z2 +
                  d_j(0, 2) * T(2) * cam.fx * p.x() / z3 - d_j(1, 1) * cam.fy / z2 +
                  d_j(1, 2) * T(2) * cam.fy * p.y() / z3;

        out.position = w.transpose() * d_p;
        out.covariance = d_cov3;
        const auto cg = covariance_backward(g.rotation, g.log_scale, d_cov3);
        out.rotation = cg.rotation;
        out.log_scale = cg.log_scale;
        const T o = st.opacity[i];
        out.logit_opacity = a[5] * o * (T(1) - o);
        out.color = Vec3<T>(a[6], a[7], a[8]);
        return out;
    }

    RenderOptions<T> opt_;
    ThreadPool* pool_;
};

template <typename T>
RenderOutput<T> render(std::span<const Gaussian3D<T>> gaussians, const Camera<T>& cam, const Vec3<T>& background,
                       const RenderOptions<T>& opt = {}, ThreadPool* pool = nullptr) {
    return Rasterizer<T>(opt, pool).forward(gaussians, cam, background);
}

template <typename T>
RenderOutput<T> render(const GaussianScene<T>& scene, const Camera<T>& cam, const Vec3<T>& background,
                       const RenderOptions<T>& opt = {}, ThreadPool* pool = nullptr) {
    const auto world = scene.realize();
    return render<T>(std::span<const Gaussian3D<T>>(world), cam, background, opt, pool);
}

/// Naive per-pixel renderer: every pixel composites the full depth-sorted
/// list of projected Gaussians. Kept as the correctness reference for the
/// tiled path.
template <typename T>
RenderOutput<T> render_reference(std::span<const Gaussian3D<T>> gaussians, const Camera<T>& cam,
                                 const Vec3<T>& background, const RenderOptions<T>& opt = {}) {
    struct Item {
        std::uint32_t index;
        Splat2D<T> splat;
        Mat2<T> conic;
        T opacity;
    };
    std::vector<Item> items;
    for (std::uint32_t i = 0; i < gaussians.size(); ++i) {
        const auto s = project_gaussian(gaussians[i], cam, opt);
        if (!s || !(s->cov.determinant() >= T(detail::kMinCovDet))) {
            continue;
        }
        items.push_back({i, *s, s->cov.inverse(), gaussians[i].opacity()});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.splat.depth < b.splat.depth; });
    RenderOutput<T> out;
    out.color = Image<T>(cam.width, cam.height, 3);
    out.depth = Image<T>(cam.width, cam.height, 1);
    out.alpha = Image<T>(cam.width, cam.height, 1);
    out.transmittance = Image<T>(cam.width, cam.height, 1);
    const T cutoff2 = opt.sigma_cutoff * opt.sigma_cutoff;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            T trans = 1, acc_alpha = 0, acc_depth = 0;
            Vec3<T> c = Vec3<T>::Zero();
            for (const auto& it : items) {
                const Vec2<T> d = Vec2<T>(T(x), T(y)) - it.splat.mean;
                const T maha = d.dot(it.conic * d);
                if (maha > cutoff2) {
                    continue;
                }
                const T alpha = it.opacity * std::exp(T(-0.5) * maha);
                c += gaussians[it.index].color * alpha * trans;
                acc_alpha += alpha * trans;
                acc_depth += it.splat.depth * alpha * trans;
                trans *= T(1) - alpha;
                if (trans < opt.min_transmittance) {
                    break;
                }
            }
            c += background * trans;
            for (int k = 0; k < 3; ++k) {
                out.color(y, x, k) = c(k);
            }
            out.alpha(y, x) = acc_alpha;
            out.transmittance(y, x) = trans;
            out.depth(y, x) = acc_alpha > T(0) ? acc_depth / std::max(acc_alpha, T(1e-8)) : T(0);
        }
    }
    return out;
}

struct BenchmarkReport {
    int repeats = 0;
    int threads = 1;
    double median_ms = 0;
    double fps = 0;
    double project_ms = 0; // per-stage medians
    double sort_ms = 0;
    double bin_ms = 0;
    double raster_ms = 0;
    std::uint64_t image_hash = 0;
    bool deterministic = true; // every repeat produced the same image
    RenderStats stats;
};

/// FNV-1a over the raw bytes of an image.
template <typename T> std::uint64_t image_hash(const Image<T>& img) {
    std::uint64_t h = 1469598103934665603ull;
    const auto* p = reinterpret_cast<const unsigned char*>(img.data().data());
    for (std::size_t i = 0; i < img.size() * sizeof(T); ++i) {
        h = (h ^ p[i]) * 1099511628211ull;
    }
    return h;
}

template <typename T>
BenchmarkReport render_benchmark(const GaussianScene<T>& scene, const Camera<T>& cam, int repeats,
                                 const Vec3<T>& background = Vec3<T>::Zero(), ThreadPool* pool = nullptr,
                                 const RenderOptions<T>& opt = {}) {
    if (repeats < 1) {
        throw Error(ErrorCode::Config, "benchmark needs at least one repeat");
    }
    const auto world = scene.realize();
    const Rasterizer<T> raster(opt, pool);
    std::vector<double> total, project, sort, bin, rast;
    BenchmarkReport rep;
    rep.repeats = repeats;
    rep.threads = pool ? pool->size() : 1;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto out = raster.forward(std::span<const Gaussian3D<T>>(world), {}, cam, background);
        total.push_back(detail::ms_since(t0));
        project.push_back(out.stats.project_ms);
        sort.push_back(out.stats.sort_ms);
        bin.push_back(out.stats.bin_ms);
        rast.push_back(out.stats.raster_ms);
        const auto h = image_hash(out.color);
        if (r == 0) {
            rep.image_hash = h;
            rep.stats = out.stats;
        } else if (h != rep.image_hash) {
            rep.deterministic = false;
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    rep.median_ms = median(total);
    rep.fps = rep.median_ms > 0 ? 1000.0 / rep.median_ms : 0;
    rep.project_ms = median(project);
    rep.sort_ms = median(sort);
    rep.bin_ms = median(bin);
    rep.raster_ms = median(rast);
    return rep;
}

} // namespace coin
