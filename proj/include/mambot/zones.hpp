#pragma once

// Speed-zone partition of the free floor and its mixed-integer encoding.
//
// Every convex piece P_j of free space carries a speed limit v_j. Lifting
// appends per-axis velocity rows so that F_j = {x | [x y] in P_j, |vx|,|vy| <= v_j}
// lives in the 4D state space (x, y, vx, vy). The disjunction "x in some F_j"
// is encoded with one binary per region and row-wise big-M relaxations.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/geometry.hpp"
#include "mambot/map_file.hpp"
#include "mambot/qsp.hpp"

namespace mambot::zones {

using geometry::AxisBox;
using geometry::HalfspacePolytope;

struct Region {
    HalfspacePolytope polytope;  // 2D position set
    double v_max{0.0};           // per-axis speed limit, m/s
    std::string source;          // map entry the piece came from
    AxisBox bounds;              // bounding box of polytope
};

struct SpeedZoneMap {
    std::vector<Region> regions;
    AxisBox workspace;
    geometry::PolytopeList obstacles;
    std::vector<std::string> obstacle_names;

    /// Largest speed limit over all regions.
    double v_global() const {
        double v = 0.0;
        for (const auto& r : regions) v = std::max(v, r.v_max);
        return v;
    }

    /// Indices of every region containing p (several at shared boundaries).
    std::vector<std::size_t> locate(const Eigen::Vector2d& p) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < regions.size(); ++j) {
            if (geometry::contains(regions[j].polytope, p)) out.push_back(j);
        }
        return out;
    }
};

/// Resolves authored areas into disjoint convex pieces.
///
/// Priority is obstacle > slower zone > faster zone > open floor: zones are
/// processed in ascending v_max, each minus everything already claimed, and
/// the open floor is the workspace minus all of it.
inline SpeedZoneMap build_partition(const geometry::MapSpec& spec, double v_hardware_max = qsp::kHardwareMaxSpeed) {
    const auto& ws = spec.workspace();
    SpeedZoneMap map;
    map.workspace = *ws.box;
    const HalfspacePolytope ws_poly = HalfspacePolytope::from_box(map.workspace);

    geometry::PolytopeList claimed;
    std::vector<const geometry::MapEntry*> zones;
    for (const auto& e : spec.entries) {
        if (e.kind == geometry::EntryKind::Obstacle) {
            map.obstacles.push_back(e.region);
            map.obstacle_names.push_back(e.name);
            claimed.push_back(e.region);
        } else if (e.kind == geometry::EntryKind::Zone) {
            if (e.v_max > v_hardware_max) {
                throw InputError("zone '" + e.name + "' v_max exceeds the hardware limit");
            }
            AxisBox bb;
            try {
                bb = geometry::bounding_box(e.region);
            } catch (const NumericalError&) {
                throw InputError("zone '" + e.name + "' is empty or unbounded");
            }
            if (!map.workspace.contains(bb.lower(), 1e-9) || !map.workspace.contains(bb.upper(), 1e-9)) {
                throw InputError("zone '" + e.name + "' lies outside the workspace");
            }
            zones.push_back(&e);
        }
    }
    std::stable_sort(zones.begin(), zones.end(),
                     [](const geometry::MapEntry* a, const geometry::MapEntry* b) { return a->v_max < b->v_max; });

    auto add_pieces = [&](const geometry::PolytopeList& pieces, double v, const std::string& source) {
        for (const auto& p : pieces) map.regions.push_back({p, v, source, geometry::bounding_box(p)});
    };
    for (const auto* z : zones) {
        add_pieces(geometry::region_diff(z->region, claimed), z->v_max, z->name);
        claimed.push_back(z->region);
    }
    add_pieces(geometry::region_diff(ws_poly, claimed), std::min(ws.v_max, v_hardware_max), ws.name);
    if (map.regions.empty()) throw InputError("map leaves no free space");
    return map;
}

/// Position rows of one region stacked with its four velocity rows.
struct LiftedRegion {
    HalfspacePolytope set;  // 4D
    std::size_t source{0};  // region index j
    double v_max{0.0};
};

inline LiftedRegion lift(const HalfspacePolytope& region, double v_max, std::size_t source = 0) {
    if (region.dim() != 2) throw DimensionError("lift: region must be 2D");
    if (!(v_max > 0.0)) throw InputError("lift: v_max must be positive");
    const int r = region.rows();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r + 4, 4);
    Eigen::VectorXd b(r + 4);
    A.topLeftCorner(r, 2) = region.A();
    b.head(r) = region.b();
    A(r, 2) = 1.0;
    A(r + 1, 2) = -1.0;
    A(r + 2, 3) = 1.0;
    A(r + 3, 3) = -1.0;
    b.tail(4).setConstant(v_max);
    return {HalfspacePolytope(std::move(A), std::move(b)), source, v_max};
}

inline std::vector<LiftedRegion> lift_all(const SpeedZoneMap& map) {
    std::vector<LiftedRegion> out;
    out.reserve(map.regions.size());
    for (std::size_t j = 0; j < map.regions.size(); ++j) out.push_back(lift(map.regions[j].polytope, map.regions[j].v_max, j));
    return out;
}

struct BigMEncoding {
    std::vector<LiftedRegion> regions;
    std::vector<Eigen::VectorXd> M;  // row-wise relaxation per region
    AxisBox state_box;               // 4D box the M values are valid over
};

/// Row-wise big-M over a 4D state box: M = max_{x in box} a.x - b, floored at 0.
inline Eigen::VectorXd big_m_over_box(const HalfspacePolytope& set, const AxisBox& box) {
    const Eigen::VectorXd c = box.center();
    const Eigen::VectorXd h = box.halfwidth();
    Eigen::VectorXd M(set.rows());
    for (int i = 0; i < set.rows(); ++i) {
        const Eigen::RowVectorXd a = set.A().row(i);
        M(i) = std::max(0.0, a.cwiseAbs().dot(h.transpose()) + a.dot(c.transpose()) - set.b()(i));
    }
    return M;
}

/// Big-M values valid for every state in workspace x [-v_global, v_global]^2.
inline BigMEncoding compute_big_m(std::span<const LiftedRegion> lifted, const AxisBox& workspace, double v_global) {
    if (workspace.dim() != 2) throw DimensionError("compute_big_m: workspace must be 2D");
    if (!((workspace.upper() - workspace.lower()).array() > 0.0).all()) {
        throw InputError("compute_big_m: workspace has nonpositive extent");
    }
    if (!(v_global > 0.0)) throw InputError("compute_big_m: v_global must be positive");
    Eigen::Vector4d lo, hi;
    lo << workspace.lower(), -v_global, -v_global;
    hi << workspace.upper(), v_global, v_global;
    BigMEncoding enc;
    enc.state_box = AxisBox(lo, hi);
    enc.regions.assign(lifted.begin(), lifted.end());
    for (const auto& r : enc.regions) enc.M.push_back(big_m_over_box(r.set, enc.state_box));
    return enc;
}

inline BigMEncoding encode(const SpeedZoneMap& map) {
    const auto lifted = lift_all(map);
    return compute_big_m(lifted, map.workspace, map.v_global());
}

inline nlohmann::json partition_to_json(const SpeedZoneMap& map) {
    nlohmann::json pieces = nlohmann::json::array();
    for (std::size_t j = 0; j < map.regions.size(); ++j) {
        const auto& r = map.regions[j];
        nlohmann::json A = nlohmann::json::array();
        for (int i = 0; i < r.polytope.rows(); ++i) A.push_back({r.polytope.A()(i, 0), r.polytope.A()(i, 1)});
        nlohmann::json verts = nlohmann::json::array();
        for (const auto& v : geometry::polygon_vertices(r.polytope)) verts.push_back({v.x(), v.y()});
        pieces.push_back({{"index", j},
                          {"source", r.source},
                          {"v_max", r.v_max},
                          {"area", geometry::area(r.polytope)},
                          {"halfspaces", {{"A", A}, {"b", std::vector<double>(r.polytope.b().begin(), r.polytope.b().end())}}},
                          {"vertices", verts}});
    }
    return {{"workspace", {map.workspace.lower()(0), map.workspace.lower()(1), map.workspace.upper()(0), map.workspace.upper()(1)}},
            {"pieces", pieces}};
}

}  // namespace mambot::zones
