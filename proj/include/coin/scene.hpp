// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/mesh.hpp"

#include <optional>
#include <vector>

namespace coin {

/// Per-Gaussian gradient of a scalar loss. Field layout mirrors Gaussian3D;
/// `covariance` keeps dL/dΣ so bound scenes can chain into their local frame.
template <typename T> struct GaussianGrad {
    Vec3<T> position = Vec3<T>::Zero();
    Eigen::Matrix<T, 4, 1> rotation = Eigen::Matrix<T, 4, 1>::Zero();
    Vec3<T> log_scale = Vec3<T>::Zero();
    T logit_opacity = T(0);
    Vec3<T> color = Vec3<T>::Zero();
    Mat3<T> covariance = Mat3<T>::Zero();

    bool finite() const {
        return position.allFinite() && rotation.allFinite() && log_scale.allFinite() && std::isfinite(logit_opacity) &&
               color.allFinite() && covariance.allFinite();
    }

    GaussianGrad& operator+=(const GaussianGrad& o) {
        position += o.position;
        rotation += o.rotation;
        log_scale += o.log_scale;
        logit_opacity += o.logit_opacity;
        color += o.color;
        covariance += o.covariance;
        return *this;
    }
};

template <typename T> using GradientBuffer = std::vector<GaussianGrad<T>>;

/// A set of Gaussians, either free in world space or bound to the faces of a
/// parametric mesh. When bound, each Gaussian's position / rotation /
/// log_scale are the binding-local values (local_position, local_rotation,
/// relative_log_scale) and `tri_index` names the host face.
template <typename T> struct GaussianScene {
    std::vector<Gaussian3D<T>> gaussians;
    std::optional<ParametricMesh<T>> mesh;
    std::vector<std::uint32_t> tri_index;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    bool bound() const { return mesh.has_value(); }

    static GaussianScene from_bindings(ParametricMesh<T> host, const std::vector<TriangleBinding<T>>& bindings) {
        host.validate();
        GaussianScene s;
        s.mesh = std::move(host);
        s.gaussians.reserve(bindings.size());
        s.tri_index.reserve(bindings.size());
        for (const auto& b : bindings) {
            if (b.tri_index >= s.mesh->faces.size()) {
                throw Error(ErrorCode::Format, "binding references face " + std::to_string(b.tri_index));
            }
            Gaussian3D<T> g;
            g.position = b.local_position;
            g.rotation = b.local_rotation;
            g.log_scale = b.relative_log_scale;
            s.gaussians.push_back(g);
            s.tri_index.push_back(b.tri_index);
        }
        return s;
    }

    TriangleBinding<T> binding(std::size_t i) const {
        const auto& g = gaussians[i];
        return {tri_index[i], g.position, g.rotation, g.log_scale};
    }

    /// World-space Gaussians for the current mesh state (identity for free
    /// scenes). Pure: the same scene always yields bit-identical output.
    std::vector<Gaussian3D<T>> realize() const {
        if (!bound()) {
            return gaussians;
        }
        const auto verts = mesh->deformed();
        std::vector<TriangleFrame<T>> frames;
        frames.reserve(mesh->faces.size());
        for (std::size_t f = 0; f < mesh->faces.size(); ++f) {
            frames.push_back(triangle_frame(verts, mesh->faces, f));
        }
        std::vector<Gaussian3D<T>> out(gaussians.size());
        for (std::size_t i = 0; i < gaussians.size(); ++i) {
            const auto& fr = frames[tri_index[i]];
            const auto& l = gaussians[i];
            Gaussian3D<T>& g = out[i];
            g.position = fr.anchor + fr.scale_metric * (fr.rotation * l.position);
            g.rotation = Quat<T>(fr.rotation) * l.rotation;
            g.log_scale = l.log_scale.array() + std::log(fr.scale_metric);
            g.logit_opacity = l.logit_opacity;
            g.color = l.color;
        }
        return out;
    }

    /// Positions on the undeformed mesh (or world positions when free); the
    /// canonical coordinates used for per-Gaussian position embeddings.
    std::vector<Vec3<T>> canonical_positions() const {
        std::vector<Vec3<T>> out(gaussians.size());
        if (!bound()) {
            for (std::size_t i = 0; i < gaussians.size(); ++i) {
                out[i] = gaussians[i].position;
            }
            return out;
        }
        for (std::size_t i = 0; i < gaussians.size(); ++i) {
            const auto fr = triangle_frame(mesh->vertices, mesh->faces, tri_index[i]);
            out[i] = fr.anchor + fr.scale_metric * (fr.rotation * gaussians[i].position);
        }
        return out;
    }

    /// Converts world-space gradients (from the renderer) into gradients of
    /// the stored parameters.
    GradientBuffer<T> pullback(const GradientBuffer<T>& world) const {
        if (!bound()) {
            return world;
        }
        const auto verts = mesh->deformed();
        GradientBuffer<T> out(world.size());
        for (std::size_t i = 0; i < gaussians.size(); ++i) {
            const auto fr = triangle_frame(verts, mesh->faces, tri_index[i]);
            const auto& l = gaussians[i];
            const auto& w = world[i];
            GaussianGrad<T>& o = out[i];
            o.position = fr.scale_metric * (fr.rotation.transpose() * w.position);
            o.covariance = fr.rotation.transpose() * w.covariance * fr.rotation;
            const Vec3<T> world_log_scale = l.log_scale.array() + std::log(fr.scale_metric);
            const auto cg = covariance_backward(l.rotation, world_log_scale, o.covariance);
            o.rotation = cg.rotation;
            o.log_scale = cg.log_scale;
            o.logit_opacity = w.logit_opacity;
            o.color = w.color;
        }
        return out;
    }
};

} // namespace coin
