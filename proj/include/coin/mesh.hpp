// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/gaussian.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <vector>

namespace coin {

using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh with linear blendshapes:
/// deformed = base + Σ_b weights[b] · blendshapes[b].
template <typename T> struct ParametricMesh {
    std::vector<Vec3<T>> vertices;
    std::vector<Face> faces;
    std::vector<std::vector<Vec3<T>>> blendshapes;
    std::vector<T> weights;

    std::size_t face_count() const { return faces.size(); }

    void validate() const {
        for (const auto& f : faces) {
            for (auto v : f) {
                if (v >= vertices.size()) {
                    throw Error(ErrorCode::Format, "face references vertex " + std::to_string(v) + " of " +
                                                       std::to_string(vertices.size()));
                }
            }
        }
        if (weights.size() != blendshapes.size()) {
            throw Error(ErrorCode::DimensionMismatch, "blendshape weight count differs from basis count");
        }
        for (const auto& b : blendshapes) {
            if (b.size() != vertices.size()) {
                throw Error(ErrorCode::DimensionMismatch, "blendshape has different vertex count than base");
            }
        }
    }

    std::vector<Vec3<T>> deformed() const {
        std::vector<Vec3<T>> out = vertices;
        for (std::size_t b = 0; b < blendshapes.size(); ++b) {
            if (weights[b] == T(0)) {
                continue;
            }
            for (std::size_t v = 0; v < out.size(); ++v) {
                out[v] += weights[b] * blendshapes[b][v];
            }
        }
        return out;
    }

    /// Applies x -> R x + t to the base vertices and rotates the blendshape
    /// offsets, so every deformed state is transformed the same way.
    template <typename Transform> ParametricMesh transformed(const Transform& rigid) const {
        ParametricMesh out = *this;
        for (auto& v : out.vertices) {
            v = rigid.apply(v);
        }
        for (auto& shape : out.blendshapes) {
            for (auto& d : shape) {
                d = rigid.rotation * d;
            }
        }
        return out;
    }
};

/// Local frame of a host triangle: columns of `rotation` are
/// (unit first edge, unit normal, edge × normal).
template <typename T> struct TriangleFrame {
    Mat3<T> rotation;
    Vec3<T> anchor;
    T scale_metric;
};

inline constexpr double kMinTriangleArea = 1e-12;

template <typename T>
TriangleFrame<T> triangle_frame(const std::vector<Vec3<T>>& verts, const std::vector<Face>& faces,
                                std::size_t tri_index) {
    const Face& f = faces.at(tri_index);
    const Vec3<T>& v0 = verts[f[0]];
    const Vec3<T>& v1 = verts[f[1]];
    const Vec3<T>& v2 = verts[f[2]];
    const Vec3<T> e1 = v1 - v0;
    const Vec3<T> cross = e1.cross(v2 - v0);
    const T twice_area = cross.norm();
    if (!(twice_area * T(0.5) > T(kMinTriangleArea))) {
        throw Error(ErrorCode::DegenerateGeometry, "face " + std::to_string(tri_index) + " has zero area");
    }
    const Vec3<T> a = e1.normalized();
    const Vec3<T> n = cross / twice_area;
    TriangleFrame<T> frame;
    frame.rotation.col(0) = a;
    frame.rotation.col(1) = n;
    frame.rotation.col(2) = a.cross(n);
    frame.anchor = (v0 + v1 + v2) / T(3);
    frame.scale_metric = std::sqrt(twice_area * T(0.5));
    return frame;
}

template <typename T> struct TriangleBinding {
    std::uint32_t tri_index = 0;
    Vec3<T> local_position = Vec3<T>::Zero();
    Quat<T> local_rotation = Quat<T>::Identity();
    Vec3<T> relative_log_scale = Vec3<T>::Zero();
};

/// Global Gaussian for a binding on the given (deformed) vertex state.
/// Opacity and color are not part of the binding and are left at defaults.
template <typename T>
Gaussian3D<T> realize(const TriangleBinding<T>& b, const std::vector<Vec3<T>>& verts, const std::vector<Face>& faces) {
    const TriangleFrame<T> fr = triangle_frame(verts, faces, b.tri_index);
    Gaussian3D<T> g;
    g.position = fr.anchor + fr.scale_metric * (fr.rotation * b.local_position);
    g.rotation = Quat<T>(fr.rotation) * b.local_rotation;
    g.log_scale = b.relative_log_scale.array() + std::log(fr.scale_metric);
    return g;
}

template <typename T> Gaussian3D<T> realize(const TriangleBinding<T>& b, const ParametricMesh<T>& mesh) {
    return realize(b, mesh.deformed(), mesh.faces);
}

/// Directional derivative of the realized position when the vertices move
/// with velocity `d_verts` (forward-mode chain rule through the frame).
template <typename T>
Vec3<T> realize_position_tangent(const TriangleBinding<T>& b, const std::vector<Vec3<T>>& verts,
                                 const std::vector<Face>& faces, const std::vector<Vec3<T>>& d_verts) {
    const Face& f = faces.at(b.tri_index);
    const Vec3<T> e1 = verts[f[1]] - verts[f[0]];
    const Vec3<T> e2 = verts[f[2]] - verts[f[0]];
    const Vec3<T> de1 = d_verts[f[1]] - d_verts[f[0]];
    const Vec3<T> de2 = d_verts[f[2]] - d_verts[f[0]];

    const Vec3<T> c = e1.cross(e2);
    const Vec3<T> dc = de1.cross(e2) + e1.cross(de2);
    const T cn = c.norm();
    const Vec3<T> n = c / cn;
    const Vec3<T> dn = (dc - n * n.dot(dc)) / cn;

    const T s = std::sqrt(cn * T(0.5));
    const T ds = n.dot(dc) / (T(4) * s);

    const T en = e1.norm();
    const Vec3<T> a = e1 / en;
    const Vec3<T> da = (de1 - a * a.dot(de1)) / en;
    const Vec3<T> bx = a.cross(n);
    const Vec3<T> dbx = da.cross(n) + a.cross(dn);

    const Vec3<T>& l = b.local_position;
    const Vec3<T> rl = a * l.x() + n * l.y() + bx * l.z();
    const Vec3<T> drl = da * l.x() + dn * l.y() + dbx * l.z();
    const Vec3<T> d_anchor = (d_verts[f[0]] + d_verts[f[1]] + d_verts[f[2]]) / T(3);
    return d_anchor + ds * rl + s * drl;
}

/// `n_per_face` bindings per face with barycentric-uniform positions,
/// identity local rotation and a 1σ extent of half the triangle scale metric.
template <typename T>
std::vector<TriangleBinding<T>> init_on_mesh(const ParametricMesh<T>& mesh, int n_per_face, std::uint64_t seed) {
    mesh.validate();
    const auto verts = mesh.deformed();
    Rng rng(seed);
    std::vector<TriangleBinding<T>> out;
    out.reserve(mesh.faces.size() * static_cast<std::size_t>(std::max(n_per_face, 0)));
    for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const TriangleFrame<T> fr = triangle_frame(verts, mesh.faces, fi);
        const Face& f = mesh.faces[fi];
        for (int k = 0; k < n_per_face; ++k) {
            T u = T(rng.uniform());
            T v = T(rng.uniform());
            if (u + v > T(1)) {
                u = T(1) - u;
                v = T(1) - v;
            }
            const Vec3<T> p = (T(1) - u - v) * verts[f[0]] + u * verts[f[1]] + v * verts[f[2]];
            TriangleBinding<T> b;
            b.tri_index = static_cast<std::uint32_t>(fi);
            b.local_position = fr.rotation.transpose() * (p - fr.anchor) / fr.scale_metric;
            b.relative_log_scale = Vec3<T>::Constant(std::log(T(0.5)));
            out.push_back(b);
        }
    }
    return out;
}

/// Icosphere of the given subdivision level with unit radius.
template <typename T> ParametricMesh<T> icosphere(int subdivisions) {
    ParametricMesh<T> m;
    const T phi = (T(1) + std::sqrt(T(5))) / T(2);
    const std::array<Vec3<T>, 12> base = {
        Vec3<T>(-1, phi, 0), Vec3<T>(1, phi, 0), Vec3<T>(-1, -phi, 0), Vec3<T>(1, -phi, 0),
        Vec3<T>(0, -1, phi), Vec3<T>(0, 1, phi), Vec3<T>(0, -1, -phi), Vec3<T>(0, 1, -phi),
        Vec3<T>(phi, 0, -1), Vec3<T>(phi, 0, 1), Vec3<T>(-phi, 0, -1), Vec3<T>(-phi, 0, 1)};
    for (const auto& v : base) {
        m.vertices.push_back(v.normalized());
    }
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int level = 0; level < subdivisions; ++level) {
        std::vector<Face> next;
        next.reserve(m.faces.size() * 4);
        std::map<std::uint64_t, std::uint32_t> midpoint_cache;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const std::uint64_t key = (std::uint64_t(std::min(a, b)) << 32) | std::max(a, b);
            if (auto it = midpoint_cache.find(key); it != midpoint_cache.end()) {
                return it->second;
            }
            m.vertices.push_back(((m.vertices[a] + m.vertices[b]) * T(0.5)).normalized());
            const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
            midpoint_cache.emplace(key, idx);
            return idx;
        };
        for (const auto& f : m.faces) {
            const auto a = midpoint(f[0], f[1]);
            const auto b = midpoint(f[1], f[2]);
            const auto c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        m.faces = std::move(next);
    }
    return m;
}

} // namespace coin
