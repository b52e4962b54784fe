// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

namespace coin {

/// One anisotropic 3D Gaussian with flat RGB color.
template <typename T> struct Gaussian3D {
    Vec3<T> position = Vec3<T>::Zero();
    Quat<T> rotation = Quat<T>::Identity();
    Vec3<T> log_scale = Vec3<T>::Zero();
    T logit_opacity = T(0);
    Vec3<T> color = Vec3<T>::Constant(T(0.5));

    T opacity() const { return sigmoid(logit_opacity); }
    Vec3<T> scale() const { return log_scale.array().exp(); }

    template <typename U> Gaussian3D<U> cast() const {
        Gaussian3D<U> g;
        g.position = position.template cast<U>();
        g.rotation = rotation.template cast<U>();
        g.log_scale = log_scale.template cast<U>();
        g.logit_opacity = U(logit_opacity);
        g.color = color.template cast<U>();
        return g;
    }
};

/// Σ = R diag(exp(2·log_scale)) Rᵀ. Symmetric bit-exactly: the lower triangle
/// is mirrored from the upper one.
template <typename T> Mat3<T> covariance(const Gaussian3D<T>& g) {
    const Mat3<T> r = rotation_from_quat(g.rotation);
    const Vec3<T> var = (T(2) * g.log_scale).array().exp();
    Mat3<T> m = r * var.asDiagonal() * r.transpose();
    m(1, 0) = m(0, 1);
    m(2, 0) = m(0, 2);
    m(2, 1) = m(1, 2);
    return m;
}

template <typename T> struct CovarianceGrad {
    Eigen::Matrix<T, 4, 1> rotation; // (w, x, y, z)
    Vec3<T> log_scale;
};

/// Chain dL/dΣ (full-matrix convention, symmetric) to the rotation quaternion
/// and log-scales.
template <typename T>
CovarianceGrad<T> covariance_backward(const Quat<T>& q, const Vec3<T>& log_scale, const Mat3<T>& d_cov) {
    const Mat3<T> r = rotation_from_quat(q);
    const Vec3<T> s = log_scale.array().exp();
    const Mat3<T> m = r * s.asDiagonal();
    const Mat3<T> d_m = T(2) * d_cov * m;
    const Mat3<T> d_r = d_m * s.asDiagonal();
    const Mat3<T> rt_dm = r.transpose() * d_m;
    CovarianceGrad<T> out;
    out.rotation = quat_backward(q, d_r);
    for (int k = 0; k < 3; ++k) {
        out.log_scale(k) = rt_dm(k, k) * s(k);
    }
    return out;
}

} // namespace coin
