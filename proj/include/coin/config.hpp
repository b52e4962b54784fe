// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coin/core.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace coin {

struct TrainConfig {
    double lambda_l1 = 0.8;
    double lambda_ssim = 0.2;
    double lambda_lpips = 0.05;
    double lambda_offset = 1.0;

    long phase1_iters = 2000;
    long phase2_iters = 6000;

    double lr_position = 1.6e-4;
    double lr_position_decay = 10.0; // initial / final ratio over the run
    double lr_rotation = 1e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
    double lr_mlp = 1e-3;
    double lr_embedding = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    long seed = 0;
    long embed_dim = 16;
    long hidden_width = 64;
    long pos_freqs = 4;

    long gaussians_per_face = 4;
    double init_opacity = 0.5;

    bool coin = true;         // false: base model only, pixel losses on I^C
    bool detach_color = true; // base color enters the MLP as a constant
    long log_every = 10;
    long checkpoint_every = 0;

    long total_iters() const { return phase1_iters + phase2_iters; }

    using Field = std::variant<double TrainConfig::*, long TrainConfig::*, bool TrainConfig::*>;
    struct Entry {
        const char* key;
        Field field;
    };

    static const std::vector<Entry>& entries() {
        static const std::vector<Entry> table = {
            {"lambda_l1", &TrainConfig::lambda_l1},
            {"lambda_ssim", &TrainConfig::lambda_ssim},
            {"lambda_lpips", &TrainConfig::lambda_lpips},
            {"lambda_offset", &TrainConfig::lambda_offset},
            {"phase1_iters", &TrainConfig::phase1_iters},
            {"phase2_iters", &TrainConfig::phase2_iters},
            {"lr_position", &TrainConfig::lr_position},
            {"lr_position_decay", &TrainConfig::lr_position_decay},
            {"lr_rotation", &TrainConfig::lr_rotation},
            {"lr_scale", &TrainConfig::lr_scale},
            {"lr_opacity", &TrainConfig::lr_opacity},
            {"lr_color", &TrainConfig::lr_color},
            {"lr_mlp", &TrainConfig::lr_mlp},
            {"lr_embedding", &TrainConfig::lr_embedding},
            {"adam_beta1", &TrainConfig::adam_beta1},
            {"adam_beta2", &TrainConfig::adam_beta2},
            {"adam_eps", &TrainConfig::adam_eps},
            {"seed", &TrainConfig::seed},
            {"embed_dim", &TrainConfig::embed_dim},
            {"hidden_width", &TrainConfig::hidden_width},
            {"pos_freqs", &TrainConfig::pos_freqs},
            {"gaussians_per_face", &TrainConfig::gaussians_per_face},
            {"init_opacity", &TrainConfig::init_opacity},
            {"coin", &TrainConfig::coin},
            {"detach_color", &TrainConfig::detach_color},
            {"log_every", &TrainConfig::log_every},
            {"checkpoint_every", &TrainConfig::checkpoint_every},
        };
        return table;
    }

    /// Sets one field from its text form. Unknown keys and unparsable values
    /// throw a Config error.
    void set(const std::string& key, const std::string& value) {
        for (const auto& e : entries()) {
            if (key != e.key) {
                continue;
            }
            std::visit([&](auto member) { parse_into(this->*member, key, value); }, e.field);
            return;
        }
        throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
    }

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) {
                throw Error(ErrorCode::Config, what);
            }
        };
        for (double v : {lambda_l1, lambda_ssim, lambda_lpips, lambda_offset}) {
            require(v >= 0 && std::isfinite(v), "loss weights must be finite and >= 0");
        }
        require(phase1_iters >= 0 && phase2_iters >= 0, "iteration counts must be >= 0");
        for (double v : {lr_position, lr_rotation, lr_scale, lr_opacity, lr_color, lr_mlp, lr_embedding}) {
            require(v >= 0 && std::isfinite(v), "learning rates must be finite and >= 0");
        }
        require(lr_position_decay > 0, "lr_position_decay must be positive");
        require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, "adam betas must be in [0,1)");
        require(adam_eps > 0, "adam_eps must be positive");
        require(embed_dim >= 0 && hidden_width >= 1 && pos_freqs >= 0, "invalid MLP dimensions");
        require(gaussians_per_face >= 1, "gaussians_per_face must be >= 1");
        require(init_opacity > 0 && init_opacity < 1, "init_opacity must be in (0,1)");
        require(log_every >= 1, "log_every must be >= 1");
        require(checkpoint_every >= 0, "checkpoint_every must be >= 0");
    }

    /// Parses `key = value` lines. Blank lines and `#` comments are ignored.
    static TrainConfig parse(std::istream& in, const std::string& source = "config") {
        TrainConfig cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) {
                line.erase(hash);
            }
            const std::string trimmed = trim(line);
            if (trimmed.empty()) {
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::Config, source + ":" + std::to_string(lineno) + ": expected key = value");
            }
            try {
                cfg.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
            } catch (const Error& e) {
                throw Error(ErrorCode::Config, source + ":" + std::to_string(lineno) + ": " + strip_code(e.what()));
            }
        }
        cfg.validate();
        return cfg;
    }

    static TrainConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorCode::Io, "cannot open config " + path);
        }
        return parse(in, path);
    }

    std::string to_string() const {
        std::ostringstream os;
        os.precision(17);
        for (const auto& e : entries()) {
            os << e.key << " = ";
            std::visit(
                [&](auto member) {
                    using V = std::remove_cvref_t<decltype(this->*member)>;
                    if constexpr (std::is_same_v<V, bool>) {
                        os << (this->*member ? "true" : "false");
                    } else {
                        os << this->*member;
                    }
                },
                e.field);
            os << '\n';
        }
        return os.str();
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\"");
        if (b == std::string::npos) {
            return {};
        }
        const auto e = s.find_last_not_of(" \t\r\"");
        return s.substr(b, e - b + 1);
    }

    static std::string strip_code(const std::string& msg) {
        const auto colon = msg.find(": ");
        return colon == std::string::npos ? msg : msg.substr(colon + 2);
    }

    static void parse_into(double& out, const std::string& key, const std::string& v) {
        std::size_t used = 0;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) {
            throw Error(ErrorCode::Config, "'" + key + "' expects a number, got '" + v + "'");
        }
    }

    static void parse_into(long& out, const std::string& key, const std::string& v) {
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc() || ptr != v.data() + v.size()) {
            throw Error(ErrorCode::Config, "'" + key + "' expects an integer, got '" + v + "'");
        }
    }

    static void parse_into(bool& out, const std::string& key, const std::string& v) {
        if (v == "true" || v == "1") {
            out = true;
        } else if (v == "false" || v == "0") {
            out = false;
        } else {
            throw Error(ErrorCode::Config, "'" + key + "' expects true or false, got '" + v + "'");
        }
    }
};

} // namespace coin
