// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

#include <numbers>
#include <span>
#include <sstream>
#include <vector>

namespace coin {

template <typename T> using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T> using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// [sin(2^k π p), cos(2^k π p)] for k < L, each over x, y, z. Size 6L.
template <typename T> VecX<T> position_embedding(const Vec3<T>& p, int frequencies) {
    if (frequencies < 0) {
        throw Error(ErrorCode::Config, "positional frequency count must be >= 0");
    }
    VecX<T> e(6 * frequencies);
    for (int k = 0; k < frequencies; ++k) {
        const T f = T(std::ldexp(std::numbers::pi, k));
        for (int a = 0; a < 3; ++a) {
            e(6 * k + a) = std::sin(f * p(a));
            e(6 * k + 3 + a) = std::cos(f * p(a));
        }
    }
    return e;
}

/// Maps positions into [−0.5, 0.5]³ around their bounding-box centre, with a
/// single isotropic scale. The base frequency is then injective per axis.
template <typename T> std::vector<Vec3<T>> normalize_positions(const std::vector<Vec3<T>>& ps) {
    if (ps.empty()) {
        return {};
    }
    Vec3<T> lo = ps.front(), hi = ps.front();
    for (const auto& p : ps) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3<T> center = (lo + hi) / T(2);
    const T extent = (hi - lo).maxCoeff();
    const T inv = extent > T(0) ? T(1) / extent : T(1);
    std::vector<Vec3<T>> out;
    out.reserve(ps.size());
    for (const auto& p : ps) {
        out.push_back((p - center) * inv);
    }
    return out;
}

/// Rows of e_g, one per Gaussian, from canonical positions.
template <typename T> MatX<T> position_embeddings(const std::vector<Vec3<T>>& canonical, int frequencies) {
    const auto norm = normalize_positions(canonical);
    MatX<T> out(6 * frequencies, static_cast<Eigen::Index>(norm.size()));
    for (std::size_t i = 0; i < norm.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = position_embedding(norm[i], frequencies);
    }
    return out;
}

/// One learnable d-vector per training view, addressed by view id.
template <typename T> class ViewEmbeddingTable {
public:
    ViewEmbeddingTable() = default;
    ViewEmbeddingTable(std::vector<int> ids, int dim, std::uint64_t seed, T init_std = T(0.1))
        : ids_(std::move(ids)), dim_(dim), values_(ids_.size() * static_cast<std::size_t>(dim)) {
        if (dim < 0) {
            throw Error(ErrorCode::Config, "embedding dimension must be >= 0");
        }
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            for (std::size_t j = i + 1; j < ids_.size(); ++j) {
                if (ids_[i] == ids_[j]) {
                    throw Error(ErrorCode::Config, "duplicate view id " + std::to_string(ids_[i]));
                }
            }
        }
        Rng rng(seed);
        for (auto& v : values_) {
            v = T(rng.normal()) * init_std;
        }
    }

    int dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<int>& ids() const { return ids_; }

    std::size_t index_of(int id) const {
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (ids_[i] == id) {
                return i;
            }
        }
        std::ostringstream os;
        os << "unknown view id " << id << "; available:";
        for (int v : ids_) {
            os << ' ' << v;
        }
        throw Error(ErrorCode::UnknownView, os.str());
    }

    std::span<T> row(std::size_t index) { return {values_.data() + index * dim_, static_cast<std::size_t>(dim_)}; }
    std::span<const T> row(std::size_t index) const {
        return {values_.data() + index * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<const T> embedding(int id) const { return row(index_of(id)); }

    std::vector<T>& values() { return values_; }
    const std::vector<T>& values() const { return values_; }

private:
    std::vector<int> ids_;
    int dim_ = 0;
    std::vector<T> values_;
};

/// Activations kept from a forward pass for the backward pass.
template <typename T> struct MlpCache {
    MatX<T> input;  // in × N
    MatX<T> hidden; // W × N, after tanh
};

template <typename T> struct MlpGrad {
    std::vector<T> theta;
    std::vector<T> view_embedding;
    MatX<T> colors; // 3 × N
};

/// c_offset = W2 tanh(W1 [e_view; c; e_g] + b1) + b2. Parameters live in one
/// flat array laid out as W1 (column-major), b1, W2 (column-major), b2.
template <typename T> class InconsistencyMLP {
public:
    InconsistencyMLP() = default;
    InconsistencyMLP(int view_dim, int pos_dim, int hidden, std::uint64_t seed)
        : view_dim_(view_dim), pos_dim_(pos_dim), hidden_(hidden) {
        if (view_dim < 0 || pos_dim < 0 || hidden < 1) {
            throw Error(ErrorCode::Config, "invalid MLP dimensions");
        }
        theta_.assign(parameter_count(), T(0));
        Rng rng(seed);
        const T std_dev = T(1) / std::sqrt(T(input_dim()));
        auto w1 = this->w1();
        for (Eigen::Index j = 0; j < w1.cols(); ++j) {
            for (Eigen::Index i = 0; i < w1.rows(); ++i) {
                w1(i, j) = T(rng.normal()) * std_dev;
            }
        }
    }

    int input_dim() const { return view_dim_ + 3 + pos_dim_; }
    int view_dim() const { return view_dim_; }
    int pos_dim() const { return pos_dim_; }
    int hidden() const { return hidden_; }
    std::size_t parameter_count() const {
        return static_cast<std::size_t>(hidden_) * input_dim() + hidden_ + 3 * hidden_ + 3;
    }

    std::vector<T>& theta() { return theta_; }
    const std::vector<T>& theta() const { return theta_; }

    /// Offsets (3 × N) for N Gaussians with colors (3 × N) and e_g (P × N).
    MatX<T> forward(std::span<const T> e_view, const MatX<T>& colors, const MatX<T>& pos_embed,
                    MlpCache<T>* cache = nullptr) const {
        check_inputs(e_view, colors, pos_embed);
        const Eigen::Index n = colors.cols();
        MatX<T> x(input_dim(), n);
        const Eigen::Map<const VecX<T>> ev(e_view.data(), view_dim_);
        x.topRows(view_dim_) = ev.replicate(1, n);
        x.middleRows(view_dim_, 3) = colors;
        x.bottomRows(pos_dim_) = pos_embed;
        MatX<T> h = (w1() * x).colwise() + b1();
        h = h.array().tanh().matrix();
        MatX<T> out = (w2() * h).colwise() + b2();
        if (cache) {
            cache->input = std::move(x);
            cache->hidden = std::move(h);
        }
        return out;
    }

    /// Gradients w.r.t. θ, e_view and colors given d loss / d offsets (3 × N).
    MlpGrad<T> backward(const MlpCache<T>& cache, const MatX<T>& d_out) const {
        if (d_out.rows() != 3 || d_out.cols() != cache.hidden.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "MLP upstream gradient has the wrong shape");
        }
        MlpGrad<T> g;
        g.theta.assign(parameter_count(), T(0));
        const MatX<T> dh = ((w2().transpose() * d_out).array() * (T(1) - cache.hidden.array().square())).matrix();
        const MatX<T> dx = w1().transpose() * dh;
        map_w1(g.theta) = dh * cache.input.transpose();
        map_b1(g.theta) = dh.rowwise().sum();
        map_w2(g.theta) = d_out * cache.hidden.transpose();
        map_b2(g.theta) = d_out.rowwise().sum();
        const VecX<T> dev = dx.topRows(view_dim_).rowwise().sum();
        g.view_embedding.assign(dev.data(), dev.data() + dev.size());
        g.colors = dx.middleRows(view_dim_, 3);
        return g;
    }

private:
    void check_inputs(std::span<const T> e_view, const MatX<T>& colors, const MatX<T>& pos_embed) const {
        if (static_cast<int>(e_view.size()) != view_dim_ || colors.rows() != 3 || pos_embed.rows() != pos_dim_ ||
            pos_embed.cols() != colors.cols()) {
            std::ostringstream os;
            os << "MLP input mismatch: e_view " << e_view.size() << " (want " << view_dim_ << "), colors "
               << colors.rows() << "x" << colors.cols() << ", e_g " << pos_embed.rows() << "x" << pos_embed.cols()
               << " (want " << pos_dim_ << " rows)";
            throw Error(ErrorCode::DimensionMismatch, os.str());
        }
    }

    std::size_t off_b1() const { return static_cast<std::size_t>(hidden_) * input_dim(); }
    std::size_t off_w2() const { return off_b1() + hidden_; }
    std::size_t off_b2() const { return off_w2() + 3 * static_cast<std::size_t>(hidden_); }

    Eigen::Map<MatX<T>> map_w1(std::vector<T>& p) const { return {p.data(), hidden_, input_dim()}; }
    Eigen::Map<VecX<T>> map_b1(std::vector<T>& p) const { return {p.data() + off_b1(), hidden_}; }
    Eigen::Map<MatX<T>> map_w2(std::vector<T>& p) const { return {p.data() + off_w2(), 3, hidden_}; }
    Eigen::Map<VecX<T>> map_b2(std::vector<T>& p) const { return {p.data() + off_b2(), 3}; }

    Eigen::Map<MatX<T>> w1() { return map_w1(theta_); }
    Eigen::Map<const MatX<T>> w1() const { return {theta_.data(), hidden_, input_dim()}; }
    Eigen::Map<const VecX<T>> b1() const { return {theta_.data() + off_b1(), hidden_}; }
    Eigen::Map<const MatX<T>> w2() const { return {theta_.data() + off_w2(), 3, hidden_}; }
    Eigen::Map<const VecX<T>> b2() const { return {theta_.data() + off_b2(), 3}; }

    int view_dim_ = 0;
    int pos_dim_ = 0;
    int hidden_ = 1;
    std::vector<T> theta_;
};

} // namespace coin
