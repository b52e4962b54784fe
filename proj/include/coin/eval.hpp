// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/image.hpp"
#include "coin/losses.hpp"

#include <cmath>

namespace coin {

inline constexpr double kPsnrCap = 99.0;

/// PSNR in dB for unit dynamic range, capped at 99 dB. With `quantized` both
/// images are first rounded to 8-bit levels, as they would be on disk.
template <typename T> double psnr(const Image<T>& a, const Image<T>& b, bool quantized = true) {
    require_same_shape(a, b, "psnr");
    double se = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double x = a.data()[i], y = b.data()[i];
        if (quantized) {
            x = quantize_u8(x) / 255.0;
            y = quantize_u8(y) / 255.0;
        }
        se += (x - y) * (x - y);
    }
    const double mse = a.size() ? se / double(a.size()) : 0.0;
    if (mse == 0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// SSIM on 8-bit-quantized copies, matching psnr(..., true).
template <typename T> double ssim_quantized(const Image<T>& a, const Image<T>& b) {
    return ssim(quantize8(a.template cast<double>()), quantize8(b.template cast<double>()));
}

} // namespace coin
