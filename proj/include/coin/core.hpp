// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace coin {

template <typename T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T> using Mat2 = Eigen::Matrix<T, 2, 2>;
template <typename T> using Mat3 = Eigen::Matrix<T, 3, 3>;
template <typename T> using Mat23 = Eigen::Matrix<T, 2, 3>;
template <typename T> using Quat = Eigen::Quaternion<T>;

enum class ErrorCode {
    BehindCamera,
    InvalidDepth,
    InvalidCamera,
    DegenerateGeometry,
    DimensionMismatch,
    NonFiniteGradient,
    NonFiniteLoss,
    Config,
    UnknownView,
    Io,
    Format,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::BehindCamera: return "behind-camera";
    case ErrorCode::InvalidDepth: return "invalid-depth";
    case ErrorCode::InvalidCamera: return "invalid-camera";
    case ErrorCode::DegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonFiniteGradient: return "non-finite-gradient";
    case ErrorCode::NonFiniteLoss: return "non-finite-loss";
    case ErrorCode::Config: return "config";
    case ErrorCode::UnknownView: return "unknown-view";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    }
    return "unknown";
}

/// All library failures are reported through this exception; `code()` lets
/// callers and tests distinguish the failure class without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

template <typename T> T sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T> T logit(T p) { return std::log(p / (T(1) - p)); }

/// Rotation matrix of the normalized quaternion (w, x, y, z).
template <typename T> Mat3<T> rotation_from_quat(const Quat<T>& q_in) {
    const Quat<T> q = q_in.normalized();
    const T w = q.w(), x = q.x(), y = q.y(), z = q.z();
    Mat3<T> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
        T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
        T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

/// Gradient of a scalar loss w.r.t. the raw (unnormalized) quaternion
/// coefficients, given dL/dR for R = rotation_from_quat(q). Returned as
/// (w, x, y, z).
template <typename T> Eigen::Matrix<T, 4, 1> quat_backward(const Quat<T>& q_in, const Mat3<T>& g) {
    const T norm = q_in.norm();
    const Quat<T> q = q_in.normalized();
    const T w = q.w(), x = q.x(), y = q.y(), z = q.z();

    // dL/d(normalized q)
    Eigen::Matrix<T, 4, 1> gn;
    gn(0) = T(2) * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    gn(1) = T(2) * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - T(2) * x * g(1, 1) - w * g(1, 2) +
                    z * g(2, 0) + w * g(2, 1) - T(2) * x * g(2, 2));
    gn(2) = T(2) * (-T(2) * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                    w * g(2, 0) + z * g(2, 1) - T(2) * y * g(2, 2));
    gn(3) = T(2) * (-T(2) * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - T(2) * z * g(1, 1) +
                    y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // back through q / |q|
    const Eigen::Matrix<T, 4, 1> qn(w, x, y, z);
    return (gn - qn * qn.dot(gn)) / norm;
}

/// Seeded generator with portable uniform/normal draws (the std
/// distributions are implementation-defined, which would break byte-identical
/// outputs across toolchains).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

template <typename T> bool all_finite(const Eigen::MatrixBase<T>& m) { return m.allFinite(); }

} // namespace coin
