// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

#include <numbers>
#include <type_traits>
#include <utility>
#include <vector>

namespace coin {

/// Rigid world-to-camera transform x_cam = rotation * x_world + translation.
template <typename T> struct RigidTransform {
    Mat3<T> rotation = Mat3<T>::Identity();
    Vec3<T> translation = Vec3<T>::Zero();

    static RigidTransform identity() { return {}; }

    Vec3<T> apply(const Vec3<T>& x) const { return rotation * x + translation; }

    /// (this ∘ other)(x) = this(other(x))
    RigidTransform compose(const RigidTransform& other) const {
        return {rotation * other.rotation, rotation * other.translation + translation};
    }

    RigidTransform inverse() const {
        const Mat3<T> rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }

    bool is_valid(T tol = T(1e-6)) const {
        return (rotation * rotation.transpose() - Mat3<T>::Identity()).cwiseAbs().maxCoeff() <= tol &&
               std::abs(rotation.determinant() - T(1)) <= tol && translation.allFinite();
    }

    template <typename U> RigidTransform<U> cast() const {
        return {rotation.template cast<U>(), translation.template cast<U>()};
    }
};

template <typename T> struct Intrinsics {
    T fx = T(1), fy = T(1), cx = T(0), cy = T(0);
    int width = 1, height = 1;
};

/// Pinhole camera. Conventions: +z forward, +x right, +y down; image origin
/// top-left with pixel centers at integer coordinates; depth is camera-frame z.
template <typename T> struct Camera {
    T fx = T(1), fy = T(1), cx = T(0), cy = T(0);
    int width = 1, height = 1;
    RigidTransform<T> pose;

    Camera() = default;
    Camera(const Intrinsics<T>& k, const RigidTransform<T>& world_to_cam)
        : fx(k.fx), fy(k.fy), cx(k.cx), cy(k.cy), width(k.width), height(k.height), pose(world_to_cam) {
        validate();
    }

    Intrinsics<T> intrinsics() const { return {fx, fy, cx, cy, width, height}; }

    void validate() const {
        if (!(fx > T(0) && fy > T(0)) || width < 1 || height < 1) {
            throw Error(ErrorCode::InvalidCamera, "focal lengths must be positive and image non-empty");
        }
        if (!pose.is_valid()) {
            throw Error(ErrorCode::InvalidCamera, "pose rotation is not a proper orthonormal matrix");
        }
    }

    Vec3<T> center() const { return -(pose.rotation.transpose() * pose.translation); }

    template <typename U> Camera<U> cast() const {
        Camera<U> c;
        c.fx = U(fx);
        c.fy = U(fy);
        c.cx = U(cx);
        c.cy = U(cy);
        c.width = width;
        c.height = height;
        c.pose = pose.template cast<U>();
        return c;
    }
};

inline constexpr double kMinProjectDepth = 1e-8;

template <typename T> struct Projection {
    Vec2<T> pixel;
    T depth;
};

template <typename T> Projection<T> project(const Vec3<T>& world, const Camera<T>& cam) {
    const Vec3<T> p = cam.pose.apply(world);
    if (!(p.z() > T(kMinProjectDepth))) {
        throw Error(ErrorCode::BehindCamera, "point has camera depth " + std::to_string(double(p.z())));
    }
    return {Vec2<T>(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy), p.z()};
}

template <typename T> Vec3<T> unproject(const Vec2<T>& pixel, T depth, const Camera<T>& cam) {
    if (!(depth > T(0))) {
        throw Error(ErrorCode::InvalidDepth, "depth must be positive, got " + std::to_string(double(depth)));
    }
    const Vec3<T> p((pixel.x() - cam.cx) / cam.fx * depth, (pixel.y() - cam.cy) / cam.fy * depth, depth);
    return cam.pose.rotation.transpose() * (p - cam.pose.translation);
}

/// Camera at `eye` looking at `target`, with world -y as the up direction.
template <typename T>
RigidTransform<T> look_at(const Vec3<T>& eye, const Vec3<T>& target, const Vec3<T>& down = Vec3<T>(0, 1, 0)) {
    const Vec3<T> z = (target - eye).normalized();
    Vec3<T> y = down - z * z.dot(down);
    if (y.norm() < T(1e-9)) {
        // looking straight along the down axis; pick any perpendicular
        y = Vec3<T>(0, 0, 1) - z * z.z();
    }
    y.normalize();
    const Vec3<T> x = y.cross(z);
    RigidTransform<T> pose;
    pose.rotation.row(0) = x.transpose();
    pose.rotation.row(1) = y.transpose();
    pose.rotation.row(2) = z.transpose();
    pose.translation = -(pose.rotation * eye);
    return pose;
}

/// `n` cameras evenly spaced in azimuth on the horizontal (xz) circle of
/// `radius` around `target`. Camera 0 sits on the -z side of the target.
template <typename T>
std::vector<Camera<T>> orbit_cameras(int n, T radius, const std::type_identity_t<Vec3<T>>& target,
                                     const Intrinsics<T>& k) {
    if (n < 1 || !(radius > T(0))) {
        throw Error(ErrorCode::Config, "orbit needs n >= 1 and radius > 0");
    }
    std::vector<Camera<T>> cams;
    cams.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const T az = T(2) * std::numbers::pi_v<T> * T(i) / T(n);
        const Vec3<T> eye = target + radius * Vec3<T>(std::sin(az), T(0), -std::cos(az));
        cams.emplace_back(k, look_at<T>(eye, target));
    }
    return cams;
}

/// Orbit cameras shifted by `phase` (fraction of one azimuth step); used for
/// held-out poses between training views.
template <typename T>
std::vector<Camera<T>> orbit_cameras_offset(int n, T radius, const std::type_identity_t<Vec3<T>>& target,
                                            const Intrinsics<T>& k, T phase) {
    auto cams = orbit_cameras(n, radius, target, k);
    for (int i = 0; i < n; ++i) {
        const T az = T(2) * std::numbers::pi_v<T> * (T(i) + phase) / T(n);
        const Vec3<T> eye = target + radius * Vec3<T>(std::sin(az), T(0), -std::cos(az));
        cams[static_cast<std::size_t>(i)] = Camera<T>(k, look_at<T>(eye, target));
    }
    return cams;
}

} // namespace coin
