// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Synthetic ground truth: a textured Gaussian blob bound to a deformed
// icosphere, orbit renders, and recorded per-view photometric / geometric
// perturbations.

#pragma once

#include "coin/dataset.hpp"
#include "coin/render.hpp"

#include <numbers>

namespace coin {

struct SceneSpec {
    int subdivisions = 2;
    double radius = 0.7;
    double opacity = 0.9;
};

/// Deterministic textured scene bound to a blendshape icosphere. Gaussians
/// are spread over the faces (a seeded subset when there are fewer Gaussians
/// than faces) and colored by a smooth procedural pattern of their canonical
/// position.
template <typename T> GaussianScene<T> make_scene(std::uint64_t seed, int n_gaussians, const SceneSpec& spec = {}) {
    if (n_gaussians < 1) {
        throw Error(ErrorCode::Config, "make_scene needs at least one Gaussian");
    }
    Rng rng(seed);
    ParametricMesh<T> mesh = icosphere<T>(spec.subdivisions);
    for (auto& v : mesh.vertices) {
        v *= T(spec.radius);
    }
    // two smooth radial blendshapes
    std::vector<Vec3<T>> bulge(mesh.vertices.size()), twist(mesh.vertices.size());
    const double f1 = rng.uniform(2.0, 4.0), f2 = rng.uniform(2.0, 4.0), ph = rng.uniform(0, 6.28);
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3<T> n = mesh.vertices[i].normalized();
        bulge[i] = n * T(0.12 * std::cos(f1 * double(n.y())));
        twist[i] = n * T(0.08 * std::sin(f2 * double(n.x()) + ph) * double(n.z()));
    }
    mesh.blendshapes = {bulge, twist};
    mesh.weights = {T(rng.uniform(0.3, 1.0)), T(rng.uniform(-1.0, 1.0))};

    const std::size_t faces = mesh.faces.size();
    const int per_face = static_cast<int>((static_cast<std::size_t>(n_gaussians) + faces - 1) / faces);
    auto bindings = init_on_mesh(mesh, per_face, rng.next_u64());
    // seeded subset of exactly n_gaussians, kept in face order
    std::vector<std::size_t> idx(bindings.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.index(i)]);
    }
    idx.resize(static_cast<std::size_t>(n_gaussians));
    std::sort(idx.begin(), idx.end());
    std::vector<TriangleBinding<T>> chosen;
    for (auto i : idx) {
        chosen.push_back(bindings[i]);
    }
    auto scene = GaussianScene<T>::from_bindings(std::move(mesh), chosen);

    Vec3<double> freq, phase;
    for (int k = 0; k < 3; ++k) {
        freq(k) = rng.uniform(4.0, 9.0);
        phase(k) = rng.uniform(0, 6.28);
    }
    const auto canon = scene.canonical_positions();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto& g = scene.gaussians[i];
        const Vec3<double> p = canon[i].template cast<double>() / spec.radius;
        g.color = Vec3<T>(T(0.5 + 0.4 * std::sin(freq(0) * p.x() + phase(0))),
                          T(0.5 + 0.4 * std::sin(freq(1) * p.y() + phase(1) + 2 * p.z())),
                          T(0.5 + 0.4 * std::sin(freq(2) * (p.z() - p.x()) + phase(2))));
        g.logit_opacity = logit(T(spec.opacity));
        g.rotation = Quat<T>(T(rng.normal()), T(rng.normal()), T(rng.normal()), T(rng.normal())).normalized();
    }
    return scene;
}

/// make_scene on an icosphere fine enough for about `per_face` Gaussians per
/// triangle, so footprints shrink as the count grows. Used by the benchmark.
template <typename T> GaussianScene<T> benchmark_scene(std::uint64_t seed, int n_gaussians, int per_face = 4) {
    SceneSpec spec;
    spec.subdivisions = 0;
    while (20L << (2 * spec.subdivisions) < static_cast<long>(n_gaussians) / std::max(per_face, 1) &&
           spec.subdivisions < 6) {
        ++spec.subdivisions;
    }
    return make_scene<T>(seed, n_gaussians, spec);
}

/// Square images with a 40° field of view.
template <typename T> Intrinsics<T> orbit_intrinsics(int size) {
    const T f = T(size) / (T(2) * std::tan(T(20) * std::numbers::pi_v<T> / T(180)));
    return {f, f, T(size - 1) / T(2), T(size - 1) / T(2), size, size};
}

inline constexpr double kOrbitRadius = 3.0;
inline constexpr int kDefaultViews = 24;

/// Renders `cams` into a dataset with depth; view 0 is the reference.
template <typename T>
ViewDataset<T> render_dataset(const GaussianScene<T>& scene, const std::vector<Camera<T>>& cams, ThreadPool* pool = nullptr) {
    ViewDataset<T> ds;
    ds.reference_id = 0;
    ds.mesh = scene.mesh;
    ds.views.resize(cams.size());
    const auto world = scene.realize();
    const Rasterizer<T> raster({}, nullptr);
    auto one = [&](std::size_t i) {
        const auto out = raster.forward(world, cams[i], ds.background);
        Image<T> img = out.color;
        for (auto& v : img.data()) {
            v = std::clamp(v, T(0), T(1));
        }
        ds.views[i] = View<T>{static_cast<int>(i), cams[i], std::move(img), DepthImage<T>(out.depth)};
    };
    if (pool) {
        pool->parallel_for(cams.size(), one);
    } else {
        for (std::size_t i = 0; i < cams.size(); ++i) {
            one(i);
        }
    }
    return ds;
}

/// `n_views` orbit renders at radius 3 around the origin.
template <typename T>
ViewDataset<T> render_views(const GaussianScene<T>& scene, int n_views, int size, ThreadPool* pool = nullptr) {
    if (n_views < 2) {
        throw Error(ErrorCode::Config, "render_views needs at least 2 views");
    }
    return render_dataset(scene, orbit_cameras<T>(n_views, T(kOrbitRadius), Vec3<T>::Zero(), orbit_intrinsics<T>(size)),
                          pool);
}

/// Orbit poses half-way between the training poses.
template <typename T>
ViewDataset<T> render_heldout(const GaussianScene<T>& scene, int n_views, int size, ThreadPool* pool = nullptr) {
    return render_dataset(
        scene, orbit_cameras_offset<T>(n_views, T(kOrbitRadius), Vec3<T>::Zero(), orbit_intrinsics<T>(size), T(0.5)),
        pool);
}

// -------------------------------------------------------- perturbation ----

struct InconsistencySpec {
    double affine_sigma = 0;    // gain in [1−σ, 1+σ], bias in [−σ, σ]
    int blob_count = 0;
    double blob_radius_min = 2; // px, Gaussian σ of the blob
    double blob_radius_max = 6;
    double blob_amplitude_min = 0.1;
    double blob_amplitude_max = 0.3;
    double jitter = 0;          // max displacement in px
    std::uint64_t seed = 0;
    bool keep_reference_clean = true;

    bool is_zero() const { return affine_sigma == 0 && blob_count == 0 && jitter == 0; }

    void validate() const {
        if (!(affine_sigma >= 0 && jitter >= 0 && blob_count >= 0 && blob_radius_min > 0 &&
              blob_radius_max >= blob_radius_min && blob_amplitude_min >= 0 && blob_amplitude_max >= blob_amplitude_min &&
              blob_amplitude_max <= 1)) {
            throw Error(ErrorCode::Config, "invalid inconsistency spec");
        }
    }
};

struct Blob {
    double cx = 0, cy = 0, radius = 1;
    std::array<double, 3> amplitude{}; // signed, per channel
};

/// Exactly what was applied to one view: jitter warp, then gain/bias, then
/// blobs, then a clamp to [0,1].
struct PerturbationRecord {
    int view = 0;
    std::array<double, 3> gain{1, 1, 1};
    std::array<double, 3> bias{0, 0, 0};
    std::vector<Blob> blobs;
    double jitter = 0;
    std::array<double, 4> jitter_phase{}; // dx(x), dx(y), dy(x), dy(y)

    bool identity() const {
        return gain == std::array<double, 3>{1, 1, 1} && bias == std::array<double, 3>{0, 0, 0} && blobs.empty() &&
               jitter == 0;
    }

    Json to_json() const {
        Json j;
        j["view"] = view;
        j["gain"] = gain;
        j["bias"] = bias;
        Json bl = Json::array();
        for (const auto& b : blobs) {
            bl.push_back({{"cx", b.cx}, {"cy", b.cy}, {"radius", b.radius}, {"amplitude", b.amplitude}});
        }
        j["blobs"] = bl;
        j["jitter"] = jitter;
        j["jitter_phase"] = jitter_phase;
        return j;
    }

    static PerturbationRecord from_json(const Json& j) {
        PerturbationRecord r;
        r.view = j.at("view").get<int>();
        r.gain = j.at("gain").get<std::array<double, 3>>();
        r.bias = j.at("bias").get<std::array<double, 3>>();
        for (const auto& b : j.at("blobs")) {
            r.blobs.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(), b.at("radius").get<double>(),
                               b.at("amplitude").get<std::array<double, 3>>()});
        }
        r.jitter = j.at("jitter").get<double>();
        r.jitter_phase = j.at("jitter_phase").get<std::array<double, 4>>();
        return r;
    }
};

/// Blobs are truncated at 3 radii so pixels outside every support are untouched.
inline constexpr double kBlobSupport = 3.0;

/// Smooth displacement field bounded by `jitter` px in each axis.
inline Vec2<double> jitter_offset(const PerturbationRecord& r, int x, int y, int w, int h) {
    const double two_pi = 2 * std::numbers::pi;
    const double dx = 0.5 * r.jitter * (std::sin(two_pi * x / w + r.jitter_phase[0]) + std::sin(two_pi * y / h + r.jitter_phase[1]));
    const double dy = 0.5 * r.jitter * (std::sin(two_pi * x / w + r.jitter_phase[2]) + std::sin(two_pi * y / h + r.jitter_phase[3]));
    return {dx, dy};
}

/// Replays a record on a clean image.
template <typename T> Image<T> apply_perturbation(const Image<T>& clean, const PerturbationRecord& r) {
    if (r.identity()) {
        return clean;
    }
    const int w = clean.width(), h = clean.height(), ch = clean.channels();
    Image<T> out = clean;
    if (r.jitter > 0) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const Vec2<double> d = jitter_offset(r, x, y, w, h);
                const auto taps = detail::bilinear_taps(x + d.x(), y + d.y(), w, h);
                const double w00 = (1 - taps.wx) * (1 - taps.wy), w10 = taps.wx * (1 - taps.wy);
                const double w01 = (1 - taps.wx) * taps.wy, w11 = taps.wx * taps.wy;
                for (int c = 0; c < ch; ++c) {
                    out(y, x, c) = T(w00 * clean(taps.y0, taps.x0, c) + w10 * clean(taps.y0, taps.x1, c) +
                                     w01 * clean(taps.y1, taps.x0, c) + w11 * clean(taps.y1, taps.x1, c));
                }
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                double v = double(out(y, x, c)) * r.gain[c % 3] + r.bias[c % 3];
                for (const auto& b : r.blobs) {
                    const double dx = x - b.cx, dy = y - b.cy, d2 = dx * dx + dy * dy;
                    const double lim = kBlobSupport * b.radius;
                    if (d2 <= lim * lim) {
                        v += b.amplitude[c % 3] * std::exp(-d2 / (2 * b.radius * b.radius));
                    }
                }
                out(y, x, c) = T(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

/// Draws the perturbation for one view from (spec.seed, view id).
inline PerturbationRecord draw_perturbation(const InconsistencySpec& spec, int view, int width, int height) {
    PerturbationRecord r;
    r.view = view;
    Rng rng(spec.seed * 0x2545F4914F6CDD1Dull + static_cast<std::uint64_t>(view) + 17);
    if (spec.affine_sigma > 0) {
        for (int c = 0; c < 3; ++c) {
            r.gain[c] = rng.uniform(1 - spec.affine_sigma, 1 + spec.affine_sigma);
            r.bias[c] = rng.uniform(-spec.affine_sigma, spec.affine_sigma);
        }
    }
    for (int i = 0; i < spec.blob_count; ++i) {
        Blob b;
        b.cx = rng.uniform(0, width - 1);
        b.cy = rng.uniform(0, height - 1);
        b.radius = rng.uniform(spec.blob_radius_min, spec.blob_radius_max);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int c = 0; c < 3; ++c) {
            b.amplitude[c] = sign * rng.uniform(spec.blob_amplitude_min, spec.blob_amplitude_max);
        }
        r.blobs.push_back(b);
    }
    if (spec.jitter > 0) {
        r.jitter = spec.jitter;
        for (auto& p : r.jitter_phase) {
            p = rng.uniform(0, 2 * std::numbers::pi);
        }
    }
    return r;
}

template <typename T> struct SyntheticBundle {
    ViewDataset<T> clean;
    ViewDataset<T> perturbed;
    std::vector<PerturbationRecord> records;
};

/// Perturbs every view (except the reference when requested). The clean
/// dataset is copied, never modified.
template <typename T> SyntheticBundle<T> inject(const ViewDataset<T>& clean, const InconsistencySpec& spec) {
    spec.validate();
    SyntheticBundle<T> b{clean, clean, {}};
    for (auto& v : b.perturbed.views) {
        PerturbationRecord r;
        r.view = v.id;
        if (!(spec.keep_reference_clean && v.id == clean.reference_id)) {
            r = draw_perturbation(spec, v.id, v.image.width(), v.image.height());
        }
        v.image = apply_perturbation(v.image, r);
        b.records.push_back(r);
    }
    Json recs = Json::array();
    for (const auto& r : b.records) {
        recs.push_back(r.to_json());
    }
    b.perturbed.extra["perturbation"] = recs;
    return b;
}

} // namespace coin
