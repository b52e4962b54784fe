// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Consistent / inconsistent training: a shared Gaussian base model plus a
// per-view color offset MLP.

#pragma once

#include "coin/adam.hpp"
#include "coin/blob.hpp"
#include "coin/config.hpp"
#include "coin/dataset.hpp"
#include "coin/eval.hpp"
#include "coin/losses.hpp"
#include "coin/mlp.hpp"
#include "coin/render.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>

namespace coin {

enum class ViewMode { Consistent, ReferenceEmbedding };

/// c* = clamp(c + c_offset, 0, 1).
template <typename T> Vec3<T> combined_color(const Vec3<T>& c, const Vec3<T>& offset) {
    return (c + offset).cwiseMax(T(0)).cwiseMin(T(1));
}

template <typename T> struct CoinModel {
    GaussianScene<T> scene;
    ViewEmbeddingTable<T> embeddings;
    InconsistencyMLP<T> mlp;
    MatX<T> pos_embed; // 6L × N, fixed
    int reference_id = 0;
    Vec3<T> background = Vec3<T>::Zero();

    /// Gaussians bound to the dataset mesh, base colors 0.5, zero offsets.
    static CoinModel initialize(const ViewDataset<T>& ds, const TrainConfig& cfg) {
        if (!ds.mesh) {
            throw Error(ErrorCode::Config, "dataset has no mesh to bind Gaussians to");
        }
        CoinModel m;
        const auto seed = static_cast<std::uint64_t>(cfg.seed);
        m.scene = GaussianScene<T>::from_bindings(*ds.mesh, init_on_mesh(*ds.mesh, int(cfg.gaussians_per_face), seed));
        for (auto& g : m.scene.gaussians) {
            g.logit_opacity = logit(T(cfg.init_opacity));
            g.color = Vec3<T>::Constant(T(0.5));
        }
        m.embeddings = ViewEmbeddingTable<T>(ds.ids(), int(cfg.embed_dim), seed + 1);
        m.mlp = InconsistencyMLP<T>(int(cfg.embed_dim), int(6 * cfg.pos_freqs), int(cfg.hidden_width), seed + 2);
        m.pos_embed = position_embeddings(m.scene.canonical_positions(), int(cfg.pos_freqs));
        m.reference_id = ds.reference_id;
        m.background = ds.background;
        return m;
    }

    MatX<T> base_colors() const {
        MatX<T> c(3, static_cast<Eigen::Index>(scene.size()));
        for (std::size_t i = 0; i < scene.size(); ++i) {
            c.col(static_cast<Eigen::Index>(i)) = scene.gaussians[i].color;
        }
        return c;
    }

    MatX<T> offsets(int view_id, MlpCache<T>* cache = nullptr) const {
        return mlp.forward(embeddings.embedding(view_id), base_colors(), pos_embed, cache);
    }

    std::vector<Vec3<T>> combined_colors(const MatX<T>& off) const {
        std::vector<Vec3<T>> out(scene.size());
        for (std::size_t i = 0; i < scene.size(); ++i) {
            out[i] = combined_color<T>(scene.gaussians[i].color, off.col(static_cast<Eigen::Index>(i)));
        }
        return out;
    }
};

/// One row of the training log.
struct LossReport {
    long iteration = 0;
    int phase = 1;
    int view = 0;
    double l_pixel = 0;
    double l_struc = 0;
    double l_reg = 0;
    double total = 0;
    double mean_abs_offset = 0;
    double psnr_c = 0;
    double psnr_ic = 0;

    bool finite() const {
        return std::isfinite(l_pixel) && std::isfinite(l_struc) && std::isfinite(l_reg) && std::isfinite(total) &&
               std::isfinite(mean_abs_offset) && std::isfinite(psnr_c) && std::isfinite(psnr_ic);
    }

    static std::string csv_header() {
        return "iteration,phase,view,l_pixel,l_struc,l_reg,total,mean_abs_offset,psnr_c,psnr_ic";
    }

    std::string csv_row() const {
        char buf[320];
        std::snprintf(buf, sizeof buf, "%ld,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.6f,%.6f", iteration, phase, view, l_pixel,
                      l_struc, l_reg, total, mean_abs_offset, psnr_c, psnr_ic);
        return buf;
    }
};

/// Which loss terms contribute to the gradients.
struct LossTerms {
    bool pixel = true;
    bool struc = true;
    bool reg = true;
};

enum class LossStage {
    Base, // λ1·L1 + λ_SSIM·(1 − SSIM) on I^C; no MLP
    Coin, // full split losses
};

template <typename T> struct CoinGradients {
    GradientBuffer<T> scene;        // in stored-parameter space
    std::vector<T> theta;           // empty in the base stage
    std::vector<T> view_embedding;  // empty in the base stage
    std::size_t view_index = 0;
};

template <typename T> struct LossEvaluation {
    LossReport report;
    CoinGradients<T> grads;
    Image<T> render_c;
    Image<T> render_ic;
};

/// Pixel loss λ1·L1 + λ_SSIM·(1 − SSIM) of `img` against `target`, with d/dimg.
template <typename T>
T pixel_loss(const Image<T>& img, const Image<T>& target, const TrainConfig& cfg, Image<T>& grad) {
    Image<T> g_l1, g_ssim;
    const T l1 = l1_loss(img, target, &g_l1);
    const T s = ssim(img, target, &g_ssim);
    grad = Image<T>(img.width(), img.height(), img.channels());
    const T a = T(cfg.lambda_l1), b = T(cfg.lambda_ssim);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad.data()[i] = a * g_l1.data()[i] - b * g_ssim.data()[i];
    }
    return a * l1 + b * (T(1) - s);
}

/// Losses and gradients for one training view.
///
/// Base stage: I^C only. Coin stage: I^C from base colors c and I^IC from
/// c* = clamp(c + c_offset). L_pixel reaches geometry, c, θ and e_view through
/// I^IC; L_struc reaches geometry and c through I^C; L_reg reaches θ and
/// e_view. With `detach_color` the MLP's color input carries no gradient.
template <typename T>
LossEvaluation<T> evaluate_losses(const CoinModel<T>& model, const View<T>& view, const TrainConfig& cfg,
                                  const Rasterizer<T>& raster, const PerceptualLoss<T>& proxy, LossStage stage,
                                  LossTerms terms = {}) {
    if (view.image.width() != view.camera.width || view.image.height() != view.camera.height) {
        throw Error(ErrorCode::DimensionMismatch, "target image does not match view " + std::to_string(view.id));
    }
    const std::size_t n = model.scene.size();
    const auto world = model.scene.realize();
    const std::span<const Gaussian3D<T>> gs(world);
    LossEvaluation<T> ev;
    ev.report.view = view.id;
    ev.report.phase = stage == LossStage::Base ? 1 : 2;
    ev.grads.view_index = model.embeddings.index_of(view.id);
    const Image<T>& target = view.image;

    if (stage == LossStage::Base) {
        ForwardState<T> st;
        ev.render_c = raster.forward(gs, view.camera, model.background, &st).color;
        ev.render_ic = ev.render_c;
        Image<T> d;
        ev.report.l_pixel = double(pixel_loss(ev.render_c, target, cfg, d));
        ev.report.total = ev.report.l_pixel;
        ev.report.psnr_c = ev.report.psnr_ic = psnr(ev.render_c, target, false);
        ev.grads.scene = model.scene.pullback(raster.backward(st, gs, d));
        return ev;
    }

    MlpCache<T> cache;
    const MatX<T> off = model.offsets(view.id, &cache);
    const std::vector<Vec3<T>> cstar = model.combined_colors(off);
    bool shared = true;
    for (std::size_t i = 0; i < n && shared; ++i) {
        shared = cstar[i] == model.scene.gaussians[i].color;
    }

    ForwardState<T> st_c, st_ic;
    ev.render_c = raster.forward(gs, view.camera, model.background, &st_c).color;
    if (shared) {
        ev.render_ic = ev.render_c;
    } else {
        ev.render_ic = raster.forward(gs, std::span<const Vec3<T>>(cstar), view.camera, model.background, &st_ic).color;
    }
    const ForwardState<T>& ic_state = shared ? st_c : st_ic;

    Image<T> d_ic, d_c;
    const T l_pixel = pixel_loss(ev.render_ic, target, cfg, d_ic);
    const T l_struc = T(cfg.lambda_lpips) * proxy.evaluate(ev.render_c, target, &d_c);
    for (auto& v : d_c.data()) {
        v *= T(cfg.lambda_lpips);
    }
    const T inv = n ? T(1) / T(3 * n) : T(0);
    const T mean_abs = off.cwiseAbs().sum() * inv;
    const T l_reg = T(cfg.lambda_offset) * mean_abs;
    ev.report.l_pixel = double(l_pixel);
    ev.report.l_struc = double(l_struc);
    ev.report.l_reg = double(l_reg);
    ev.report.total = double(l_pixel + l_struc + l_reg);
    ev.report.mean_abs_offset = double(mean_abs);
    ev.report.psnr_c = psnr(ev.render_c, target, false);
    ev.report.psnr_ic = psnr(ev.render_ic, target, false);

    GradientBuffer<T> world_grad(n);
    MatX<T> d_off = MatX<T>::Zero(3, static_cast<Eigen::Index>(n));
    if (terms.pixel) {
        const auto g = raster.backward(ic_state, gs, d_ic);
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Index col = static_cast<Eigen::Index>(i);
            const Vec3<T> sum = model.scene.gaussians[i].color + off.col(col);
            GaussianGrad<T> w = g[i];
            for (int k = 0; k < 3; ++k) {
                const bool inside = sum(k) >= T(0) && sum(k) <= T(1);
                w.color(k) = inside ? g[i].color(k) : T(0);
            }
            d_off.col(col) = w.color;
            world_grad[i] += w;
        }
    }
    if (terms.struc) {
        const auto g = raster.backward(st_c, gs, d_c);
        for (std::size_t i = 0; i < n; ++i) {
            world_grad[i] += g[i];
        }
    }
    if (terms.reg) {
        const T scale = T(cfg.lambda_offset) * inv;
        for (Eigen::Index i = 0; i < off.size(); ++i) {
            const T o = off.data()[i];
            d_off.data()[i] += o > T(0) ? scale : (o < T(0) ? -scale : T(0));
        }
    }
    auto mg = model.mlp.backward(cache, d_off);
    if (!cfg.detach_color) {
        for (std::size_t i = 0; i < n; ++i) {
            world_grad[i].color += mg.colors.col(static_cast<Eigen::Index>(i));
        }
    }
    ev.grads.scene = model.scene.pullback(world_grad);
    ev.grads.theta = std::move(mg.theta);
    ev.grads.view_embedding = std::move(mg.view_embedding);
    return ev;
}

/// Renders a trained model. `Consistent` uses base colors; `ReferenceEmbedding`
/// uses c* with the embedding of `view_id` (the reference view by default).
template <typename T>
RenderOutput<T> infer(const CoinModel<T>& model, const Camera<T>& cam, ViewMode mode,
                      std::optional<int> view_id = std::nullopt, ThreadPool* pool = nullptr,
                      const RenderOptions<T>& opt = {}) {
    const auto world = model.scene.realize();
    const Rasterizer<T> raster(opt, pool);
    if (mode == ViewMode::Consistent) {
        return raster.forward(world, cam, model.background);
    }
    const MatX<T> off = model.offsets(view_id.value_or(model.reference_id));
    const auto cstar = model.combined_colors(off);
    return raster.forward(world, std::span<const Vec3<T>>(cstar), cam, model.background);
}

// ------------------------------------------------------------ training ----

enum AdamGroup { kPosition, kRotation, kScale, kOpacity, kColor, kMlp, kEmbedding, kGroupCount };

template <typename T> struct Checkpoint {
    CoinModel<T> model;
    long iteration = 0;
    std::array<AdamState<T>, kGroupCount> adam;
    std::string config_text;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'O', 'I', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Checkpoint layout: magic "COINCKPT", u8 version, u8 sizeof(T), u64
/// iteration, scene blob, 3 T background, i32 reference id, embeddings
/// (u64 V, V i32 ids, u64 d, V·d T), MLP (u64 view_dim, pos_dim, hidden,
/// count, θ), e_g (u64 rows, cols, values), Adam groups (u64 count; per group
/// u64 step, u64 n, n T m, n T v), u64 length + config text.
template <typename T> std::vector<char> checkpoint_bytes(const Checkpoint<T>& ck) {
    BlobWriter w;
    w.put_raw(std::string(kCheckpointMagic, 8));
    w.put<std::uint8_t>(kCheckpointVersion);
    w.put<std::uint8_t>(sizeof(T));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(ck.iteration));
    const CoinModel<T>& m = ck.model;
    write_scene(w, m.scene);
    w.put_array(m.background.data(), 3);
    w.put<std::int32_t>(m.reference_id);
    w.put<std::uint64_t>(m.embeddings.size());
    for (int id : m.embeddings.ids()) {
        w.put<std::int32_t>(id);
    }
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.embeddings.dim()));
    w.put_array(m.embeddings.values().data(), m.embeddings.values().size());
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.mlp.view_dim()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.mlp.pos_dim()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.mlp.hidden()));
    w.put<std::uint64_t>(m.mlp.theta().size());
    w.put_array(m.mlp.theta().data(), m.mlp.theta().size());
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.pos_embed.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.pos_embed.cols()));
    w.put_array(m.pos_embed.data(), static_cast<std::size_t>(m.pos_embed.size()));
    w.put<std::uint64_t>(ck.adam.size());
    for (const auto& a : ck.adam) {
        w.put<std::uint64_t>(a.step);
        w.put<std::uint64_t>(a.m.size());
        w.put_array(a.m.data(), a.m.size());
        w.put_array(a.v.data(), a.v.size());
    }
    w.put<std::uint64_t>(ck.config_text.size());
    w.put_raw(ck.config_text);
    return w.bytes();
}

template <typename T> Checkpoint<T> parse_checkpoint(std::vector<char> bytes) {
    BlobReader r(std::move(bytes));
    if (r.get_raw(8) != std::string(kCheckpointMagic, 8)) {
        throw Error(ErrorCode::Format, "not a checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint8_t>();
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto width = r.get<std::uint8_t>();
    if (width != sizeof(T)) {
        throw Error(ErrorCode::Format, "checkpoint stores " + std::to_string(8 * width) + "-bit floats, expected " +
                                           std::to_string(8 * sizeof(T)));
    }
    Checkpoint<T> ck;
    ck.iteration = static_cast<long>(r.get<std::uint64_t>());
    CoinModel<T>& m = ck.model;
    m.scene = read_scene<T>(r);
    r.get_array(m.background.data(), 3);
    m.reference_id = r.get<std::int32_t>();
    std::vector<int> ids(r.get_count(sizeof(std::int32_t)));
    for (auto& id : ids) {
        id = r.get<std::int32_t>();
    }
    const auto dim = r.get<std::uint64_t>();
    m.embeddings = ViewEmbeddingTable<T>(ids, static_cast<int>(dim), 0);
    r.get_array(m.embeddings.values().data(), m.embeddings.values().size());
    const auto vd = r.get<std::uint64_t>(), pd = r.get<std::uint64_t>(), hidden = r.get<std::uint64_t>();
    m.mlp = InconsistencyMLP<T>(int(vd), int(pd), int(hidden), 0);
    if (r.get<std::uint64_t>() != m.mlp.theta().size()) {
        throw Error(ErrorCode::Format, "MLP parameter count does not match its dimensions");
    }
    r.get_array(m.mlp.theta().data(), m.mlp.theta().size());
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (rows != pd || cols != m.scene.size()) {
        throw Error(ErrorCode::Format, "position embedding shape does not match the scene");
    }
    m.pos_embed.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.get_array(m.pos_embed.data(), static_cast<std::size_t>(m.pos_embed.size()));
    if (r.get<std::uint64_t>() != kGroupCount) {
        throw Error(ErrorCode::Format, "unexpected optimizer group count");
    }
    for (auto& a : ck.adam) {
        a.step = r.get<std::uint64_t>();
        const auto cnt = r.get_count(2 * sizeof(T));
        a.m.resize(cnt);
        a.v.resize(cnt);
        r.get_array(a.m.data(), cnt);
        r.get_array(a.v.data(), cnt);
    }
    ck.config_text = r.get_raw(r.get_count(1));
    if (!r.done()) {
        throw Error(ErrorCode::Format, "trailing bytes after checkpoint");
    }
    return ck;
}

template <typename T> void save_checkpoint(const fs::path& path, const Checkpoint<T>& ck) {
    const auto bytes = checkpoint_bytes(ck);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename T> Checkpoint<T> load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string());
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint<T>(std::move(bytes));
}

/// Two-phase optimizer. Phase 1 fits the base model with pixel losses on I^C;
/// phase 2 trains everything with the split losses (or keeps the phase-1
/// losses when `coin` is off, which is the baseline). The view visited at
/// each iteration depends only on (seed, iteration), so a resumed run takes
/// the same path as an uninterrupted one.
template <typename T> class Trainer {
public:
    Trainer(const ViewDataset<T>& ds, TrainConfig cfg, ThreadPool* pool = nullptr)
        : ds_(&ds), cfg_(std::move(cfg)), raster_(RenderOptions<T>{}, pool) {
        check_dataset(ds);
        cfg_.validate();
        model_ = CoinModel<T>::initialize(ds, cfg_);
    }

    Trainer(const ViewDataset<T>& ds, TrainConfig cfg, Checkpoint<T> ck, ThreadPool* pool = nullptr)
        : ds_(&ds), cfg_(std::move(cfg)), raster_(RenderOptions<T>{}, pool) {
        check_dataset(ds);
        cfg_.validate();
        for (const auto& v : ds.views) {
            ck.model.embeddings.index_of(v.id);
        }
        model_ = std::move(ck.model);
        iteration_ = ck.iteration;
        adam_ = std::move(ck.adam);
    }

    const CoinModel<T>& model() const { return model_; }
    CoinModel<T>& model() { return model_; }
    const TrainConfig& config() const { return cfg_; }
    long iteration() const { return iteration_; }
    bool done() const { return iteration_ >= cfg_.total_iters(); }
    const std::vector<LossReport>& history() const { return history_; }
    void set_perceptual_loss(std::unique_ptr<PerceptualLoss<T>> p) { proxy_ = std::move(p); }

    Checkpoint<T> checkpoint() const { return {model_, iteration_, adam_, cfg_.to_string()}; }

    /// Index into the dataset of the view used at `it`.
    std::size_t view_at(long it) const {
        const std::size_t nv = ds_->size();
        const long epoch = it / static_cast<long>(nv);
        Rng rng(static_cast<std::uint64_t>(cfg_.seed) * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1);
        std::vector<std::size_t> perm(nv);
        for (std::size_t i = 0; i < nv; ++i) {
            perm[i] = i;
        }
        for (std::size_t i = nv; i > 1; --i) {
            std::swap(perm[i - 1], perm[rng.index(i)]);
        }
        return perm[static_cast<std::size_t>(it % static_cast<long>(nv))];
    }

    /// Runs one iteration and returns its report. Logged rows go to history().
    LossReport step() {
        const long it = iteration_;
        const int phase = it < cfg_.phase1_iters ? 1 : 2;
        const LossStage stage = (cfg_.coin && phase == 2) ? LossStage::Coin : LossStage::Base;
        const View<T>& view = ds_->views[view_at(it)];
        auto ev = evaluate_losses(model_, view, cfg_, raster_, *proxy_, stage);
        ev.report.iteration = it;
        ev.report.phase = phase;
        if (!ev.report.finite()) {
            throw Error(ErrorCode::NonFiniteLoss,
                        "iteration " + std::to_string(it) + " view " + std::to_string(view.id) + ": " + ev.report.csv_row());
        }
        apply(ev.grads, stage, it);
        ++iteration_;
        if (it % cfg_.log_every == 0) {
            history_.push_back(ev.report);
        }
        return ev.report;
    }

    /// Trains to the end of the schedule. `on_log` sees each logged row,
    /// `on_checkpoint` is called with the iteration count at each checkpoint.
    void run(const std::function<void(const LossReport&)>& on_log = {},
             const std::function<void(long)>& on_checkpoint = {}) {
        while (!done()) {
            const std::size_t logged = history_.size();
            step();
            if (on_log && history_.size() != logged) {
                on_log(history_.back());
            }
            if (on_checkpoint && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) {
                on_checkpoint(iteration_);
            }
        }
    }

private:
    static void check_dataset(const ViewDataset<T>& ds) {
        if (ds.views.empty()) {
            throw Error(ErrorCode::Config, "dataset is empty");
        }
        ds.validate();
        if (ds.size() < 2) {
            throw Error(ErrorCode::Config, "training needs at least 2 views");
        }
    }

    /// Packs one per-Gaussian field, runs Adam on it and writes it back.
    template <typename Load, typename Grad, typename Store>
    void step_field(AdamGroup group, int width, double lr, const CoinGradients<T>& g, Load&& load, Grad&& grad,
                    Store&& store) {
        const std::size_t n = model_.scene.size();
        std::vector<T> p(n * width), d(n * width);
        for (std::size_t i = 0; i < n; ++i) {
            load(model_.scene.gaussians[i], &p[i * width]);
            grad(g.scene[i], &d[i * width]);
        }
        adam_step<T>(p, d, adam_[group], lr, hyper());
        for (std::size_t i = 0; i < n; ++i) {
            store(model_.scene.gaussians[i], &p[i * width]);
        }
    }

    AdamHyper hyper() const { return {cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps}; }

    void apply(const CoinGradients<T>& g, LossStage stage, long it) {
        const double total = double(std::max<long>(cfg_.total_iters(), 1));
        const double lr_pos = cfg_.lr_position * std::pow(cfg_.lr_position_decay, -double(it) / total);
        using G = Gaussian3D<T>;
        using D = GaussianGrad<T>;
        auto copy3 = [](const auto& v, T* o) { o[0] = v(0), o[1] = v(1), o[2] = v(2); };
        step_field(
            kPosition, 3, lr_pos, g, [&](const G& p, T* o) { copy3(p.position, o); },
            [&](const D& d, T* o) { copy3(d.position, o); }, [](G& p, const T* v) { p.position = Vec3<T>(v[0], v[1], v[2]); });
        // gradient order is (w, x, y, z)
        step_field(
            kRotation, 4, cfg_.lr_rotation, g,
            [](const G& p, T* o) { o[0] = p.rotation.w(), o[1] = p.rotation.x(), o[2] = p.rotation.y(), o[3] = p.rotation.z(); },
            [](const D& d, T* o) { o[0] = d.rotation(0), o[1] = d.rotation(1), o[2] = d.rotation(2), o[3] = d.rotation(3); },
            [](G& p, const T* v) { p.rotation = Quat<T>(v[0], v[1], v[2], v[3]); });
        step_field(
            kScale, 3, cfg_.lr_scale, g, [&](const G& p, T* o) { copy3(p.log_scale, o); },
            [&](const D& d, T* o) { copy3(d.log_scale, o); }, [](G& p, const T* v) { p.log_scale = Vec3<T>(v[0], v[1], v[2]); });
        step_field(
            kOpacity, 1, cfg_.lr_opacity, g, [](const G& p, T* o) { o[0] = p.logit_opacity; },
            [](const D& d, T* o) { o[0] = d.logit_opacity; }, [](G& p, const T* v) { p.logit_opacity = v[0]; });
        step_field(
            kColor, 3, cfg_.lr_color, g, [&](const G& p, T* o) { copy3(p.color, o); },
            [&](const D& d, T* o) { copy3(d.color, o); }, [](G& p, const T* v) { p.color = Vec3<T>(v[0], v[1], v[2]); });
        for (auto& gs : model_.scene.gaussians) {
            gs.color = gs.color.cwiseMax(T(0)).cwiseMin(T(1));
        }
        if (stage == LossStage::Coin) {
            adam_step<T>(model_.mlp.theta(), g.theta, adam_[kMlp], cfg_.lr_mlp, hyper());
            std::vector<T> d(model_.embeddings.values().size(), T(0));
            const int dim = model_.embeddings.dim();
            for (int k = 0; k < dim; ++k) {
                d[g.view_index * dim + k] = g.view_embedding[k];
            }
            adam_step<T>(model_.embeddings.values(), d, adam_[kEmbedding], cfg_.lr_embedding, hyper());
        }
    }

    const ViewDataset<T>* ds_;
    TrainConfig cfg_;
    Rasterizer<T> raster_;
    std::unique_ptr<PerceptualLoss<T>> proxy_ = std::make_unique<PyramidL1<T>>();
    CoinModel<T> model_;
    long iteration_ = 0;
    std::array<AdamState<T>, kGroupCount> adam_{};
    std::vector<LossReport> history_;
};

} // namespace coin
