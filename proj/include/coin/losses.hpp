// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/image.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <vector>

namespace coin {

/// Mean absolute difference. If `grad` is given it receives d/da.
template <typename T> T l1_loss(const Image<T>& a, const Image<T>& b, Image<T>* grad = nullptr) {
    require_same_shape(a, b, "l1_loss");
    const std::size_t n = a.size();
    const T inv = T(1) / T(n);
    T sum = T(0);
    if (grad) {
        *grad = Image<T>(a.width(), a.height(), a.channels());
    }
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a.data()[i] - b.data()[i];
        sum += std::abs(d);
        if (grad) {
            grad->data()[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
        }
    }
    return sum * inv;
}

namespace detail {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

template <typename T> std::array<T, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> w{};
    double sum = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        w[i] = std::exp(-d * d / (2 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    std::array<T, kSsimWindow> out{};
    for (int i = 0; i < kSsimWindow; ++i) {
        out[i] = T(w[i] / sum);
    }
    return out;
}

/// Separable "valid" filtering of an h×w plane to (h−10)×(w−10).
template <typename T>
std::vector<T> filter_valid(const std::vector<T>& in, int w, int h, const std::array<T, kSsimWindow>& k) {
    const int wo = w - kSsimWindow + 1, ho = h - kSsimWindow + 1;
    std::vector<T> tmp(static_cast<std::size_t>(h) * wo, T(0));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wo; ++x) {
            T s = T(0);
            for (int i = 0; i < kSsimWindow; ++i) {
                s += k[i] * in[static_cast<std::size_t>(y) * w + x + i];
            }
            tmp[static_cast<std::size_t>(y) * wo + x] = s;
        }
    }
    std::vector<T> out(static_cast<std::size_t>(ho) * wo, T(0));
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            T s = T(0);
            for (int i = 0; i < kSsimWindow; ++i) {
                s += k[i] * tmp[static_cast<std::size_t>(y + i) * wo + x];
            }
            out[static_cast<std::size_t>(y) * wo + x] = s;
        }
    }
    return out;
}

/// Adjoint of filter_valid: scatters an (h−10)×(w−10) plane back to h×w.
template <typename T>
std::vector<T> filter_valid_adjoint(const std::vector<T>& g, int w, int h, const std::array<T, kSsimWindow>& k) {
    const int wo = w - kSsimWindow + 1, ho = h - kSsimWindow + 1;
    std::vector<T> tmp(static_cast<std::size_t>(h) * wo, T(0));
    for (int y = 0; y < ho; ++y) {
        for (int x = 0; x < wo; ++x) {
            const T v = g[static_cast<std::size_t>(y) * wo + x];
            for (int i = 0; i < kSsimWindow; ++i) {
                tmp[static_cast<std::size_t>(y + i) * wo + x] += k[i] * v;
            }
        }
    }
    std::vector<T> out(static_cast<std::size_t>(h) * w, T(0));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < wo; ++x) {
            const T v = tmp[static_cast<std::size_t>(y) * wo + x];
            for (int i = 0; i < kSsimWindow; ++i) {
                out[static_cast<std::size_t>(y) * w + x + i] += k[i] * v;
            }
        }
    }
    return out;
}

} // namespace detail

/// Single-scale SSIM: 11×11 Gaussian window (σ 1.5), K1 0.01, K2 0.03,
/// dynamic range 1, averaged over channels and valid window positions.
/// If `grad` is given it receives d ssim / d a.
template <typename T> T ssim(const Image<T>& a, const Image<T>& b, Image<T>* grad = nullptr) {
    require_same_shape(a, b, "ssim");
    const int w = a.width(), h = a.height(), ch = a.channels();
    if (w < detail::kSsimWindow || h < detail::kSsimWindow) {
        throw Error(ErrorCode::DimensionMismatch, "ssim needs images of at least 11x11, got " + std::to_string(w) +
                                                      "x" + std::to_string(h));
    }
    const auto k = detail::ssim_kernel<T>();
    const int wo = w - detail::kSsimWindow + 1, ho = h - detail::kSsimWindow + 1;
    const std::size_t npx = static_cast<std::size_t>(w) * h, nout = static_cast<std::size_t>(wo) * ho;
    const T c1 = T(detail::kSsimC1), c2 = T(detail::kSsimC2);
    const T scale = T(1) / T(nout * ch);
    if (grad) {
        *grad = Image<T>(w, h, ch);
    }
    T total = T(0);
    std::vector<T> x(npx), y(npx), xx(npx), yy(npx), xy(npx);
    for (int c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < npx; ++i) {
            x[i] = a.data()[i * ch + c];
            y[i] = b.data()[i * ch + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = detail::filter_valid(x, w, h, k);
        const auto my = detail::filter_valid(y, w, h, k);
        const auto exx = detail::filter_valid(xx, w, h, k);
        const auto eyy = detail::filter_valid(yy, w, h, k);
        const auto exy = detail::filter_valid(xy, w, h, k);
        std::vector<T> g_m, g_xx, g_xy;
        if (grad) {
            g_m.assign(nout, T(0));
            g_xx.assign(nout, T(0));
            g_xy.assign(nout, T(0));
        }
        for (std::size_t i = 0; i < nout; ++i) {
            const T sxx = exx[i] - mx[i] * mx[i];
            const T syy = eyy[i] - my[i] * my[i];
            const T sxy = exy[i] - mx[i] * my[i];
            const T a1 = T(2) * mx[i] * my[i] + c1, a2 = T(2) * sxy + c2;
            const T b1 = mx[i] * mx[i] + my[i] * my[i] + c1, b2 = sxx + syy + c2;
            const T s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const T bb = b1 * b2;
                g_m[i] = scale * (T(2) * my[i] * (a2 - a1) / bb - T(2) * mx[i] * s / b1 + T(2) * mx[i] * s / b2);
                g_xx[i] = scale * (-s / b2);
                g_xy[i] = scale * (T(2) * a1 / bb);
            }
        }
        if (grad) {
            const auto dm = detail::filter_valid_adjoint(g_m, w, h, k);
            const auto dxx = detail::filter_valid_adjoint(g_xx, w, h, k);
            const auto dxy = detail::filter_valid_adjoint(g_xy, w, h, k);
            for (std::size_t i = 0; i < npx; ++i) {
                grad->data()[i * ch + c] = dm[i] + T(2) * x[i] * dxx[i] + y[i] * dxy[i];
            }
        }
    }
    // divide rather than multiply by `scale` so a sum of exact ones gives exactly 1
    return total / T(nout * ch);
}

/// Interface for the structure term so a learned metric can be dropped in.
template <typename T> class PerceptualLoss {
public:
    virtual ~PerceptualLoss() = default;
    /// Loss of `a` against `b`; fills d/da when `grad` is non-null.
    virtual T evaluate(const Image<T>& a, const Image<T>& b, Image<T>* grad) const = 0;
    virtual std::string name() const = 0;
};

/// Mean of L1 distances between box-downsampled copies at factors 2 and 4.
/// Tolerant to small misalignment, still sensitive to structure.
template <typename T> class PyramidL1 final : public PerceptualLoss<T> {
public:
    explicit PyramidL1(std::vector<int> factors = {2, 4}) : factors_(std::move(factors)) {
        for (int f : factors_) {
            if (f < 1) {
                throw Error(ErrorCode::Config, "pyramid factor must be positive");
            }
        }
    }

    std::string name() const override { return "pyramid_l1"; }

    T evaluate(const Image<T>& a, const Image<T>& b, Image<T>* grad) const override {
        require_same_shape(a, b, "perceptual proxy");
        if (grad) {
            *grad = Image<T>(a.width(), a.height(), a.channels());
        }
        if (factors_.empty()) {
            return T(0);
        }
        const T level_weight = T(1) / T(factors_.size());
        T total = T(0);
        for (int f : factors_) {
            const Image<T> pa = downsample(a, f), pb = downsample(b, f);
            if (pa.empty()) {
                throw Error(ErrorCode::DimensionMismatch, "image too small for pyramid factor " + std::to_string(f));
            }
            Image<T> g;
            total += level_weight * l1_loss(pa, pb, grad ? &g : nullptr);
            if (grad) {
                const T share = level_weight / T(f * f);
                for (int y = 0; y < pa.height() * f; ++y) {
                    for (int x = 0; x < pa.width() * f; ++x) {
                        for (int c = 0; c < a.channels(); ++c) {
                            (*grad)(y, x, c) += share * g(y / f, x / f, c);
                        }
                    }
                }
            }
        }
        return total;
    }

    /// Average of f×f blocks; trailing rows and columns that do not fill a
    /// block are dropped.
    static Image<T> downsample(const Image<T>& img, int f) {
        const int w = img.width() / f, h = img.height() / f;
        if (w == 0 || h == 0) {
            return {};
        }
        Image<T> out(w, h, img.channels());
        const T inv = T(1) / T(f * f);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < img.channels(); ++c) {
                    T s = T(0);
                    for (int dy = 0; dy < f; ++dy) {
                        for (int dx = 0; dx < f; ++dx) {
                            s += img(y * f + dy, x * f + dx, c);
                        }
                    }
                    out(y, x, c) = s * inv;
                }
            }
        }
        return out;
    }

private:
    std::vector<int> factors_;
};

} // namespace coin
