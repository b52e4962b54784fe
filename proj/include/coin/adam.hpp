// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace coin {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// Moment estimates for one parameter group.
template <typename T> struct AdamState {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st, double lr, const AdamHyper& h) {
    if (params.size() != grads.size()) {
        throw Error(ErrorCode::DimensionMismatch, "adam: parameter and gradient sizes differ");
    }
    if (st.m.empty()) {
        st.m.assign(params.size(), T(0));
        st.v.assign(params.size(), T(0));
    } else if (st.m.size() != params.size()) {
        throw Error(ErrorCode::DimensionMismatch, "adam: state size differs from parameter count");
    }
    ++st.step;
    const T b1 = T(h.beta1), b2 = T(h.beta2);
    const T c1 = T(1) / (T(1) - T(std::pow(h.beta1, double(st.step))));
    const T c2 = T(1) / (T(1) - T(std::pow(h.beta2, double(st.step))));
    const T step = T(lr), eps = T(h.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
        st.v[i] = b2 * st.v[i] + (T(1) - b2) * g * g;
        params[i] -= step * (st.m[i] * c1) / (std::sqrt(st.v[i] * c2) + eps);
    }
}

} // namespace coin
