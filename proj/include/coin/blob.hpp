// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Little-endian binary blobs. A scene blob is
//
//   u8 bound
//   [bound] u64 nv, nv*3 T vertices, u64 nf, nf*3 u32 faces,
//           u64 nb, nb*nv*3 T blendshape offsets, nb T weights
//   u64 n, then per Gaussian: [bound] u32 face,
//           3 T position, 4 T rotation (w x y z), 3 T log_scale,
//           1 T logit_opacity, 3 T color
//
// where T is float32 or float64 as given by the enclosing header.

#pragma once

#include "coin/scene.hpp"

#include <bit>
#include <cstring>
#include <string>
#include <vector>

namespace coin {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

class BlobWriter {
public:
    template <typename V> void put(V v) {
        static_assert(std::is_trivially_copyable_v<V>);
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(V));
    }
    template <typename V> void put_array(const V* data, std::size_t n) {
        const auto* p = reinterpret_cast<const char*>(data);
        bytes_.insert(bytes_.end(), p, p + n * sizeof(V));
    }
    void put_raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class BlobReader {
public:
    explicit BlobReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    template <typename V> V get() {
        V v;
        need(sizeof(V));
        std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return v;
    }
    template <typename V> void get_array(V* out, std::size_t n) {
        need(n * sizeof(V));
        std::memcpy(out, bytes_.data() + pos_, n * sizeof(V));
        pos_ += n * sizeof(V);
    }
    std::string get_raw(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    /// Element count, checked against the bytes left so corrupt headers fail
    /// cleanly instead of allocating.
    std::uint64_t get_count(std::size_t element_size) {
        const auto n = get<std::uint64_t>();
        if (element_size && n > (bytes_.size() - pos_) / element_size) {
            throw Error(ErrorCode::Format, "blob count " + std::to_string(n) + " exceeds remaining data");
        }
        return n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::Format, "blob truncated at byte " + std::to_string(pos_));
        }
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

template <typename T> void write_scene(BlobWriter& w, const GaussianScene<T>& s) {
    w.put<std::uint8_t>(s.bound() ? 1 : 0);
    if (s.bound()) {
        const auto& m = *s.mesh;
        w.put<std::uint64_t>(m.vertices.size());
        for (const auto& v : m.vertices) {
            w.put_array(v.data(), 3);
        }
        w.put<std::uint64_t>(m.faces.size());
        for (const auto& f : m.faces) {
            w.put_array(f.data(), 3);
        }
        w.put<std::uint64_t>(m.blendshapes.size());
        for (const auto& b : m.blendshapes) {
            for (const auto& v : b) {
                w.put_array(v.data(), 3);
            }
        }
        w.put_array(m.weights.data(), m.weights.size());
    }
    w.put<std::uint64_t>(s.gaussians.size());
    for (std::size_t i = 0; i < s.gaussians.size(); ++i) {
        const auto& g = s.gaussians[i];
        if (s.bound()) {
            w.put<std::uint32_t>(s.tri_index[i]);
        }
        w.put_array(g.position.data(), 3);
        const T q[4] = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
        w.put_array(q, 4);
        w.put_array(g.log_scale.data(), 3);
        w.put(g.logit_opacity);
        w.put_array(g.color.data(), 3);
    }
}

template <typename T> GaussianScene<T> read_scene(BlobReader& r) {
    GaussianScene<T> s;
    const auto bound = r.get<std::uint8_t>();
    if (bound > 1) {
        throw Error(ErrorCode::Format, "bad scene flag");
    }
    if (bound) {
        ParametricMesh<T> m;
        m.vertices.resize(r.get_count(3 * sizeof(T)));
        for (auto& v : m.vertices) {
            r.get_array(v.data(), 3);
        }
        m.faces.resize(r.get_count(3 * sizeof(std::uint32_t)));
        for (auto& f : m.faces) {
            r.get_array(f.data(), 3);
        }
        m.blendshapes.resize(r.get_count(0));
        for (auto& b : m.blendshapes) {
            b.resize(m.vertices.size());
            for (auto& v : b) {
                r.get_array(v.data(), 3);
            }
        }
        m.weights.resize(m.blendshapes.size());
        r.get_array(m.weights.data(), m.weights.size());
        m.validate();
        s.mesh = std::move(m);
    }
    s.gaussians.resize(r.get_count(14 * sizeof(T)));
    if (bound) {
        s.tri_index.resize(s.gaussians.size());
    }
    for (std::size_t i = 0; i < s.gaussians.size(); ++i) {
        auto& g = s.gaussians[i];
        if (bound) {
            s.tri_index[i] = r.get<std::uint32_t>();
            if (s.tri_index[i] >= s.mesh->faces.size()) {
                throw Error(ErrorCode::Format, "Gaussian " + std::to_string(i) + " bound to a missing face");
            }
        }
        r.get_array(g.position.data(), 3);
        T q[4];
        r.get_array(q, 4);
        g.rotation = Quat<T>(q[0], q[1], q[2], q[3]);
        r.get_array(g.log_scale.data(), 3);
        g.logit_opacity = r.get<T>();
        r.get_array(g.color.data(), 3);
    }
    return s;
}

} // namespace coin
