// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

// Multi-view dataset and its on-disk directory layout:
//
//   cameras.json        intrinsics and world-to-camera pose per view id
//   images/NNN.png      8-bit RGB per view
//   depth/NNN.pfm       optional camera-space depth per view (0 = empty)
//   meta.json           reference view, background, view list, extras
//   mesh.obj            optional host mesh; blendshapes as extra OBJ files

#pragma once

#include "coin/camera.hpp"
#include "coin/depth_warp.hpp"
#include "coin/image.hpp"
#include "coin/mesh.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace coin {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

template <typename T> struct View {
    int id = 0;
    Camera<T> camera;
    Image<T> image;
    std::optional<DepthImage<T>> depth;
};

template <typename T> struct ViewDataset {
    std::vector<View<T>> views;
    int reference_id = 0;
    Vec3<T> background = Vec3<T>::Zero();
    std::optional<ParametricMesh<T>> mesh;
    Json extra = Json::object(); // free-form metadata kept in meta.json

    std::size_t size() const { return views.size(); }

    std::vector<int> ids() const {
        std::vector<int> out;
        for (const auto& v : views) {
            out.push_back(v.id);
        }
        return out;
    }

    std::size_t index_of(int id) const {
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (views[i].id == id) {
                return i;
            }
        }
        std::ostringstream os;
        os << "unknown view id " << id << "; available:";
        for (const auto& v : views) {
            os << ' ' << v.id;
        }
        throw Error(ErrorCode::UnknownView, os.str());
    }

    const View<T>& view(int id) const { return views[index_of(id)]; }

    /// Unique ids, reference present, images match their cameras.
    void validate() const {
        if (views.empty()) {
            throw Error(ErrorCode::Config, "dataset has no views");
        }
        std::set<int> seen;
        bool has_ref = false;
        for (const auto& v : views) {
            if (!seen.insert(v.id).second) {
                throw Error(ErrorCode::Config, "duplicate view id " + std::to_string(v.id));
            }
            has_ref = has_ref || v.id == reference_id;
            if (v.image.width() != v.camera.width || v.image.height() != v.camera.height || v.image.channels() != 3) {
                throw Error(ErrorCode::DimensionMismatch, "view " + std::to_string(v.id) + " image does not match camera");
            }
            if (v.depth && (v.depth->width() != v.camera.width || v.depth->height() != v.camera.height)) {
                throw Error(ErrorCode::DimensionMismatch, "view " + std::to_string(v.id) + " depth does not match camera");
            }
        }
        if (!has_ref) {
            throw Error(ErrorCode::Config, "reference view " + std::to_string(reference_id) + " is not in the dataset");
        }
        if (mesh) {
            mesh->validate();
        }
    }
};

inline std::string view_stem(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03d", id);
    return buf;
}

// ---------------------------------------------------------------- OBJ ----

template <typename T>
void write_obj(const fs::path& path, const std::vector<Vec3<T>>& verts, const std::vector<Face>& faces) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    char buf[128];
    for (const auto& v : verts) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", double(v.x()), double(v.y()), double(v.z()));
        out << buf;
    }
    for (const auto& f : faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

/// Reads `v` and triangular `f` lines; other records are skipped.
template <typename T>
void read_obj(const fs::path& path, std::vector<Vec3<T>>& verts, std::vector<Face>& faces) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    verts.clear();
    faces.clear();
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::Format, path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) {
                fail("bad vertex");
            }
            verts.emplace_back(T(x), T(y), T(z));
        } else if (tag == "f") {
            std::vector<long> idx;
            std::string tok;
            while (ls >> tok) {
                try {
                    idx.push_back(std::stol(tok.substr(0, tok.find('/'))));
                } catch (const std::exception&) {
                    fail("bad face index '" + tok + "'");
                }
            }
            if (idx.size() != 3) {
                fail("only triangles are supported");
            }
            Face f{};
            for (int k = 0; k < 3; ++k) {
                if (idx[k] < 1) {
                    fail("face indices must be positive");
                }
                f[k] = static_cast<std::uint32_t>(idx[k] - 1);
            }
            faces.push_back(f);
        }
    }
}

// ------------------------------------------------------------ cameras ----

template <typename T> Json camera_to_json(int id, const Camera<T>& cam) {
    Json j;
    j["id"] = id;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["fx"] = double(cam.fx);
    j["fy"] = double(cam.fy);
    j["cx"] = double(cam.cx);
    j["cy"] = double(cam.cy);
    Json rot = Json::array();
    for (int r = 0; r < 3; ++r) {
        rot.push_back({double(cam.pose.rotation(r, 0)), double(cam.pose.rotation(r, 1)), double(cam.pose.rotation(r, 2))});
    }
    j["rotation"] = rot;
    j["translation"] = {double(cam.pose.translation.x()), double(cam.pose.translation.y()),
                        double(cam.pose.translation.z())};
    return j;
}

template <typename T> std::pair<int, Camera<T>> camera_from_json(const Json& j) {
    try {
        Intrinsics<T> k{T(j.at("fx").get<double>()), T(j.at("fy").get<double>()), T(j.at("cx").get<double>()),
                        T(j.at("cy").get<double>()), j.at("width").get<int>(), j.at("height").get<int>()};
        RigidTransform<T> pose;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                pose.rotation(r, c) = T(j.at("rotation").at(r).at(c).get<double>());
            }
            pose.translation(r) = T(j.at("translation").at(r).get<double>());
        }
        return {j.at("id").get<int>(), Camera<T>(k, pose)};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, std::string("camera entry: ") + e.what());
    }
}

template <typename T> void write_cameras(const fs::path& path, const std::vector<std::pair<int, Camera<T>>>& cams) {
    Json arr = Json::array();
    for (const auto& [id, cam] : cams) {
        arr.push_back(camera_to_json(id, cam));
    }
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out << Json{{"cameras", arr}}.dump(2) << '\n';
}

inline Json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, path.string() + ": " + e.what());
    }
}

template <typename T> std::vector<std::pair<int, Camera<T>>> read_cameras(const fs::path& path) {
    const Json j = read_json(path);
    if (!j.contains("cameras") || !j["cameras"].is_array()) {
        throw Error(ErrorCode::Format, path.string() + ": missing 'cameras' array");
    }
    std::vector<std::pair<int, Camera<T>>> out;
    for (const auto& c : j["cameras"]) {
        out.push_back(camera_from_json<T>(c));
    }
    return out;
}

// ------------------------------------------------------------ dataset ----

template <typename T> void save_dataset(const fs::path& root, const ViewDataset<T>& ds) {
    ds.validate();
    fs::create_directories(root / "images");
    std::vector<std::pair<int, Camera<T>>> cams;
    bool any_depth = false;
    for (const auto& v : ds.views) {
        cams.emplace_back(v.id, v.camera);
        write_png(root / "images" / (view_stem(v.id) + ".png"), v.image);
        if (v.depth) {
            if (!any_depth) {
                fs::create_directories(root / "depth");
                any_depth = true;
            }
            write_pfm(root / "depth" / (view_stem(v.id) + ".pfm"), v.depth->depth);
        }
    }
    write_cameras(root / "cameras.json", cams);
    Json meta;
    meta["format"] = "coinsplat-dataset";
    meta["version"] = 1;
    meta["reference_view"] = ds.reference_id;
    meta["background"] = {double(ds.background.x()), double(ds.background.y()), double(ds.background.z())};
    meta["views"] = ds.ids();
    meta["depth"] = any_depth;
    if (ds.mesh) {
        write_obj(root / "mesh.obj", ds.mesh->vertices, ds.mesh->faces);
        Json shapes = Json::array();
        for (std::size_t b = 0; b < ds.mesh->blendshapes.size(); ++b) {
            const std::string name = "blendshape_" + std::to_string(b) + ".obj";
            std::vector<Vec3<T>> target = ds.mesh->vertices;
            for (std::size_t i = 0; i < target.size(); ++i) {
                target[i] += ds.mesh->blendshapes[b][i];
            }
            write_obj(root / name, target, ds.mesh->faces);
            shapes.push_back({{"file", name}, {"weight", double(ds.mesh->weights[b])}});
        }
        meta["mesh"] = {{"file", "mesh.obj"}, {"blendshapes", shapes}};
    }
    for (const auto& [k, v] : ds.extra.items()) {
        meta[k] = v;
    }
    std::ofstream out(root / "meta.json");
    out << meta.dump(2) << '\n';
}

template <typename T> ViewDataset<T> load_dataset(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw Error(ErrorCode::Io, "dataset directory " + root.string() + " does not exist");
    }
    const Json meta = read_json(root / "meta.json");
    ViewDataset<T> ds;
    try {
        ds.reference_id = meta.at("reference_view").get<int>();
        if (meta.contains("background")) {
            for (int k = 0; k < 3; ++k) {
                ds.background(k) = T(meta["background"].at(k).get<double>());
            }
        }
        if (meta.contains("mesh")) {
            ParametricMesh<T> mesh;
            read_obj(root / meta["mesh"].at("file").get<std::string>(), mesh.vertices, mesh.faces);
            for (const auto& s : meta["mesh"].value("blendshapes", Json::array())) {
                std::vector<Vec3<T>> target;
                std::vector<Face> faces;
                read_obj(root / s.at("file").get<std::string>(), target, faces);
                if (faces != mesh.faces || target.size() != mesh.vertices.size()) {
                    throw Error(ErrorCode::Format, "blendshape " + s.at("file").get<std::string>() +
                                                       " does not share the mesh topology");
                }
                for (std::size_t i = 0; i < target.size(); ++i) {
                    target[i] -= mesh.vertices[i];
                }
                mesh.blendshapes.push_back(std::move(target));
                mesh.weights.push_back(T(s.at("weight").get<double>()));
            }
            ds.mesh = std::move(mesh);
        }
        for (const auto& [k, v] : meta.items()) {
            if (k != "format" && k != "version" && k != "reference_view" && k != "background" && k != "views" &&
                k != "depth" && k != "mesh") {
                ds.extra[k] = v;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, (root / "meta.json").string() + ": " + e.what());
    }
    const bool with_depth = meta.value("depth", false);
    for (const auto& [id, cam] : read_cameras<T>(root / "cameras.json")) {
        View<T> v{id, cam, {}, std::nullopt};
        const fs::path img = root / "images" / (view_stem(id) + ".png");
        if (!fs::exists(img)) {
            throw Error(ErrorCode::Io, "missing image for view " + std::to_string(id) + ": " + img.string());
        }
        v.image = read_png<T>(img);
        if (with_depth) {
            const fs::path dp = root / "depth" / (view_stem(id) + ".pfm");
            if (!fs::exists(dp)) {
                throw Error(ErrorCode::Io, "missing depth for view " + std::to_string(id) + ": " + dp.string());
            }
            v.depth = DepthImage<T>(read_pfm<T>(dp));
        }
        ds.views.push_back(std::move(v));
    }
    ds.validate();
    return ds;
}

} // namespace coin
