#pragma once

// Shop-floor map files (JSON).
//
//   [ {"name": "floor", "kind": "workspace", "box": [lx, ly, ux, uy], "v_max": 1.0},
//     {"name": "press", "kind": "obstacle",  "box": [...]},
//     {"name": "ring",  "kind": "zone",      "halfspaces": {"A": [[..],..], "b": [..]}, "v_max": 0.4} ]
//
// An object {"label": ..., "entries": [...]} is accepted as well. Boxes are
// converted to H-rep on load. The workspace must be a box; its v_max is the
// speed of unrestricted floor and defaults to 1 m/s.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/geometry.hpp"

namespace mambot::geometry {

enum class EntryKind { Obstacle, Zone, Workspace };

struct MapEntry {
    std::string name;
    EntryKind kind{EntryKind::Obstacle};
    HalfspacePolytope region;
    std::optional<AxisBox> box;
    double v_max{std::numeric_limits<double>::quiet_NaN()};
};

struct MapSpec {
    std::string label;
    std::vector<MapEntry> entries;

    const MapEntry& workspace() const {
        for (const auto& e : entries) {
            if (e.kind == EntryKind::Workspace) return e;
        }
        throw InputError("map has no workspace entry");
    }
};

namespace detail {

inline AxisBox box_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.size() != 4) throw InputError("map entry '" + name + "': box must be [lx, ly, ux, uy]");
    for (const auto& v : j) {
        if (!v.is_number()) throw InputError("map entry '" + name + "': box values must be numbers");
    }
    Eigen::Vector2d lo(j[0].get<double>(), j[1].get<double>());
    Eigen::Vector2d hi(j[2].get<double>(), j[3].get<double>());
    try {
        return {lo, hi};
    } catch (const InputError& e) {
        throw InputError("map entry '" + name + "': " + e.what());
    }
}

inline HalfspacePolytope halfspaces_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_object() || !j.contains("A") || !j.contains("b")) {
        throw InputError("map entry '" + name + "': halfspaces must be {A, b}");
    }
    const auto& ja = j.at("A");
    const auto& jb = j.at("b");
    if (!ja.is_array() || !jb.is_array() || ja.size() != jb.size() || ja.empty()) {
        throw InputError("map entry '" + name + "': A and b must be non-empty arrays of equal length");
    }
    Eigen::MatrixXd A(static_cast<Eigen::Index>(ja.size()), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(jb.size()));
    for (std::size_t i = 0; i < ja.size(); ++i) {
        if (!ja[i].is_array() || ja[i].size() != 2) {
            throw InputError("map entry '" + name + "': each row of A must have 2 entries");
        }
        A(static_cast<Eigen::Index>(i), 0) = ja[i][0].get<double>();
        A(static_cast<Eigen::Index>(i), 1) = ja[i][1].get<double>();
        b(static_cast<Eigen::Index>(i)) = jb[i].get<double>();
    }
    try {
        return {A, b};
    } catch (const InputError& e) {
        throw InputError("map entry '" + name + "': " + e.what());
    }
}

}  // namespace detail

inline MapSpec parse_map(const nlohmann::json& doc) {
    MapSpec spec;
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
        if (!doc.contains("entries")) throw InputError("map object must contain 'entries'");
        spec.label = doc.value("label", "");
        list = &doc.at("entries");
    }
    if (!list->is_array()) throw InputError("map must be a list of entries");
    int workspaces = 0;
    for (const auto& j : *list) {
        if (!j.is_object()) throw InputError("map entry must be an object");
        MapEntry e;
        e.name = j.value("name", "");
        if (e.name.empty()) throw InputError("map entry without a name");
        const std::string kind = j.value("kind", "");
        if (kind == "obstacle") {
            e.kind = EntryKind::Obstacle;
        } else if (kind == "zone") {
            e.kind = EntryKind::Zone;
        } else if (kind == "workspace") {
            e.kind = EntryKind::Workspace;
            ++workspaces;
        } else {
            throw InputError("map entry '" + e.name + "': unknown kind '" + kind + "'");
        }
        if (j.contains("box") == j.contains("halfspaces")) {
            throw InputError("map entry '" + e.name + "': exactly one of 'box' or 'halfspaces' is required");
        }
        if (j.contains("box")) {
            e.box = detail::box_from_json(j.at("box"), e.name);
            e.region = HalfspacePolytope::from_box(*e.box);
        } else {
            if (e.kind == EntryKind::Workspace) throw InputError("workspace must be given as a box");
            e.region = detail::halfspaces_from_json(j.at("halfspaces"), e.name);
        }
        if (j.contains("v_max")) {
            if (!j.at("v_max").is_number()) throw InputError("map entry '" + e.name + "': v_max must be a number");
            e.v_max = j.at("v_max").get<double>();
        }
        if (e.kind == EntryKind::Zone && !std::isfinite(e.v_max)) {
            throw InputError("zone '" + e.name + "' needs a v_max");
        }
        if (e.kind == EntryKind::Workspace && !std::isfinite(e.v_max)) e.v_max = 1.0;
        if (e.kind != EntryKind::Obstacle && !(e.v_max > 0.0)) {
            throw InputError("map entry '" + e.name + "': v_max must be positive");
        }
        spec.entries.push_back(std::move(e));
    }
    if (workspaces != 1) throw InputError("map must contain exactly one workspace entry");
    return spec;
}

inline MapSpec load_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open map file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
        return parse_map(doc);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("invalid map file " + path + ": " + e.what());
    }
}

}  // namespace mambot::geometry
