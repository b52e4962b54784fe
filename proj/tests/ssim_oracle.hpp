// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Brute-force SSIM: every 11×11 window is visited directly and the local
// statistics are formed from centred sums in long double.

#pragma once

#include "coin/image.hpp"

#include <cmath>

namespace coin::oracle {

inline long double reference_ssim(const Image<double>& a, const Image<double>& b) {
    using LD = long double;
    constexpr int win = 11;
    LD kernel[win][win];
    LD ksum = 0;
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
            const LD di = i - 5, dj = j - 5;
            kernel[i][j] = std::exp(-(di * di + dj * dj) / (2 * 1.5L * 1.5L));
            ksum += kernel[i][j];
        }
    }
    const LD c1 = 0.0001L, c2 = 0.0009L;
    LD total = 0;
    long count = 0;
    for (int c = 0; c < a.channels(); ++c) {
        for (int y0 = 0; y0 + win <= a.height(); ++y0) {
            for (int x0 = 0; x0 + win <= a.width(); ++x0) {
                LD mx = 0, my = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        const LD wgt = kernel[i][j] / ksum;
                        mx += wgt * a(y0 + i, x0 + j, c);
                        my += wgt * b(y0 + i, x0 + j, c);
                    }
                }
                LD vx = 0, vy = 0, cov = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        const LD wgt = kernel[i][j] / ksum;
                        const LD dx = a(y0 + i, x0 + j, c) - mx, dy = b(y0 + i, x0 + j, c) - my;
                        vx += wgt * dx * dx;
                        vy += wgt * dy * dy;
                        cov += wgt * dx * dy;
                    }
                }
                total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
    }
    return total / count;
}

} // namespace coin::oracle
