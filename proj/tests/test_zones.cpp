#include <gtest/gtest.h>

#include <random>

#include "mambot/zones.hpp"

using namespace mambot;
using namespace mambot::zones;
using geometry::EntryKind;
using geometry::MapEntry;
using geometry::MapSpec;

namespace {

AxisBox box2(double lx, double ly, double ux, double uy) { return AxisBox(Eigen::Vector2d(lx, ly), Eigen::Vector2d(ux, uy)); }

MapEntry entry(const std::string& name, EntryKind kind, const AxisBox& b, double v = std::nan("")) {
    MapEntry e{name, kind, HalfspacePolytope::from_box(b), b, v};
    if (kind == EntryKind::Workspace && std::isnan(v)) e.v_max = 1.0;
    return e;
}

MapSpec workspace_only() { return {"", {entry("floor", EntryKind::Workspace, box2(0, 0, 10, 10))}}; }

MapSpec one_obstacle() {
    auto m = workspace_only();
    m.entries.push_back(entry("block", EntryKind::Obstacle, box2(4, 4, 6, 6)));
    return m;
}

MapSpec three_tiers() {
    auto m = workspace_only();
    m.entries.push_back(entry("belt", EntryKind::Zone, box2(2, 2, 8, 8), 0.8));
    m.entries.push_back(entry("buffer", EntryKind::Zone, box2(4, 4, 6, 6), 0.4));
    return m;
}

// Assigned speed at p from the authored tiers directly: innermost containing tier wins.
double tier_oracle(const Eigen::Vector2d& p) {
    if (box2(4, 4, 6, 6).contains(p)) return 0.4;
    if (box2(2, 2, 8, 8).contains(p)) return 0.8;
    return 1.0;
}

bool near_any_edge(const Eigen::Vector2d& p, std::initializer_list<double> lines, double band) {
    for (double l : lines) {
        if (std::abs(p.x() - l) < band || std::abs(p.y() - l) < band) return true;
    }
    return false;
}

bool in_lifted(const LiftedRegion& r, const Eigen::Vector4d& x) { return ((r.set.A() * x - r.set.b()).array() <= 1e-9).all(); }

bool relaxed_rows_hold(const BigMEncoding& enc, std::size_t j, const Eigen::Vector4d& x) {
    return ((enc.regions[j].set.A() * x - enc.regions[j].set.b() - enc.M[j]).array() <= 1e-9).all();
}

}  // namespace

TEST(BuildPartition, WorkspaceOnly) {
    const auto map = build_partition(workspace_only());
    ASSERT_EQ(map.regions.size(), 1u);
    EXPECT_DOUBLE_EQ(map.regions[0].v_max, 1.0);
    EXPECT_NEAR(geometry::area(map.regions[0].polytope), 100.0, 1e-9);
}

TEST(BuildPartition, ObstacleExcludedByMembership) {
    const auto map = build_partition(one_obstacle());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 100000; ++i) {
        const Eigen::Vector2d p(u(rng), u(rng));
        if (near_any_edge(p, {4.0, 6.0}, 1e-6)) continue;
        const bool in_obstacle = box2(4, 4, 6, 6).contains(p);
        const auto hits = map.locate(p);
        EXPECT_EQ(hits.empty(), in_obstacle) << p.transpose();
        EXPECT_LE(hits.size(), 1u);
    }
    double total = 0.0;
    for (const auto& r : map.regions) total += geometry::area(r.polytope);
    EXPECT_NEAR(total, 96.0, 1e-9);
}

TEST(BuildPartition, TierPriority) {
    const auto map = build_partition(three_tiers());
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 100000; ++i) {
        const Eigen::Vector2d p(u(rng), u(rng));
        if (near_any_edge(p, {2.0, 4.0, 6.0, 8.0}, 1e-6)) continue;
        const auto hits = map.locate(p);
        ASSERT_EQ(hits.size(), 1u) << p.transpose();
        EXPECT_EQ(map.regions[hits[0]].v_max, tier_oracle(p)) << p.transpose();
    }
}

TEST(BuildPartition, PiecesAvoidObstacleInteriors) {
    auto spec = three_tiers();
    spec.entries.push_back(entry("post", EntryKind::Obstacle, box2(5, 1, 7, 5)));
    const auto map = build_partition(spec);
    std::mt19937_64 rng(3);
    for (const auto& r : map.regions) {
        std::uniform_real_distribution<double> ux(r.bounds.lower()(0), r.bounds.upper()(0));
        std::uniform_real_distribution<double> uy(r.bounds.lower()(1), r.bounds.upper()(1));
        for (int i = 0; i < 2000; ++i) {
            const Eigen::Vector2d p(ux(rng), uy(rng));
            if (!geometry::contains(r.polytope, p)) continue;
            EXPECT_FALSE(box2(5 + 1e-7, 1 + 1e-7, 7 - 1e-7, 5 - 1e-7).contains(p, 0.0));
        }
    }
}

TEST(BuildPartition, Errors) {
    auto outside = workspace_only();
    outside.entries.push_back(entry("far", EntryKind::Zone, box2(8, 8, 12, 12), 0.5));
    EXPECT_THROW(build_partition(outside), InputError);
    auto full = workspace_only();
    full.entries.push_back(entry("wall", EntryKind::Obstacle, box2(-1, -1, 11, 11)));
    EXPECT_THROW(build_partition(full), InputError);
    auto fast = workspace_only();
    fast.entries.push_back(entry("rush", EntryKind::Zone, box2(1, 1, 2, 2), 1.5));
    EXPECT_THROW(build_partition(fast), InputError);
}

TEST(Lift, UnitSquareRowCount) {
    const auto L = lift(HalfspacePolytope::from_box(box2(0, 0, 1, 1)), 0.4);
    EXPECT_EQ(L.set.rows(), 8);
    EXPECT_EQ(L.set.dim(), 4);
    EXPECT_TRUE(in_lifted(L, Eigen::Vector4d(0.5, 0.5, 0.4, -0.4)));
    EXPECT_FALSE(in_lifted(L, Eigen::Vector4d(0.5, 0.5, 0.41, 0.0)));
}

TEST(Lift, BlocksDoNotMix) {
    Eigen::MatrixXd A(3, 2);
    A << 1, 1, -1, 0, 0, -1;
    const HalfspacePolytope tri(A, Eigen::Vector3d(1, 0, 0));
    const auto L = lift(tri, 0.7, 5);
    EXPECT_EQ(L.source, 5u);
    EXPECT_TRUE(L.set.A().topRightCorner(3, 2).isZero(0.0));
    EXPECT_TRUE(L.set.A().bottomLeftCorner(4, 2).isZero(0.0));
    EXPECT_TRUE(L.set.A().topLeftCorner(3, 2).isApprox(tri.A()));
    EXPECT_THROW(lift(tri, 0.0), InputError);
}

TEST(Lift, MembershipImpliesSpeedLimit) {
    const auto map = build_partition(three_tiers());
    const auto lifted = lift_all(map);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 10.0), v(-1.0, 1.0);
    for (int i = 0; i < 20000; ++i) {
        const Eigen::Vector4d x(u(rng), u(rng), v(rng), v(rng));
        for (const auto& L : lifted) {
            if (in_lifted(L, x)) {
                EXPECT_LE(std::abs(x(2)), L.v_max + 1e-9);
                EXPECT_LE(std::abs(x(3)), L.v_max + 1e-9);
            }
        }
    }
}

TEST(BigM, HandValue) {
    const auto region = HalfspacePolytope::from_box(box2(-100, -5, 1, 5));
    const auto enc = compute_big_m(std::vector{lift(region, 0.5)}, box2(-100, -5, 10, 5), 1.0);
    // Row order of a box: -x <= 100, x <= 1, -y <= 5, y <= 5, then the four velocity rows.
    EXPECT_DOUBLE_EQ(enc.M[0](1), 9.0);
    EXPECT_DOUBLE_EQ(enc.M[0](0), 0.0);
    EXPECT_DOUBLE_EQ(enc.M[0](4), 0.5);
}

TEST(BigM, SingleRegionEqualsWorkspace) {
    const auto map = build_partition(workspace_only());
    const auto enc = encode(map);
    ASSERT_EQ(enc.M.size(), 1u);
    EXPECT_TRUE((enc.M[0].array() >= 0.0).all());
    EXPECT_TRUE(enc.M[0].isZero(1e-12));
}

TEST(BigM, TwoHalvesRelaxEveryWrongAssignment) {
    auto spec = workspace_only();
    spec.entries.push_back(entry("left", EntryKind::Zone, box2(0, 0, 5, 10), 0.5));
    const auto map = build_partition(spec);
    ASSERT_EQ(map.regions.size(), 2u);
    const auto enc = encode(map);
    const double vg = map.v_global();
    int checked = 0;
    for (int ix = 0; ix < 50; ++ix) {
        for (int iy = 0; iy < 50; ++iy) {
            for (int ivx = 0; ivx < 5; ++ivx) {
                for (int ivy = 0; ivy < 5; ++ivy) {
                    const Eigen::Vector4d x(10.0 * ix / 49, 10.0 * iy / 49, -vg + 2 * vg * ivx / 4, -vg + 2 * vg * ivy / 4);
                    for (std::size_t j = 0; j < 2; ++j) {
                        ASSERT_TRUE(relaxed_rows_hold(enc, j, x));
                        ++checked;
                    }
                }
            }
        }
    }
    EXPECT_EQ(checked, 50 * 50 * 5 * 5 * 2);
}

TEST(BigM, NonpositiveExtentThrows) {
    const auto L = lift(HalfspacePolytope::from_box(box2(0, 0, 1, 1)), 0.5);
    EXPECT_THROW(compute_big_m(std::vector{L}, AxisBox(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 1)), 1.0), InputError);
}

TEST(BigM, DisjunctionEquivalence) {
    auto spec = three_tiers();
    spec.entries.push_back(entry("post", EntryKind::Obstacle, box2(1, 6, 3, 9)));
    const auto map = build_partition(spec);
    const auto enc = encode(map);
    const std::size_t n = enc.regions.size();
    int member = 0, nonmember = 0;
    for (int ix = 0; ix <= 40; ++ix) {
        for (int iy = 0; iy <= 40; ++iy) {
            for (double vx : {-1.0, -0.6, -0.3, 0.0, 0.5, 0.9}) {
                for (double vy : {-0.95, -0.4, 0.0, 0.35, 0.7, 1.0}) {
                    const Eigen::Vector4d x(0.25 * ix + 0.01, 0.25 * iy + 0.01, vx, vy);
                    bool disjunction = false;
                    for (const auto& L : enc.regions) disjunction = disjunction || in_lifted(L, x);
                    // One-hot assignments: region j exact, all others relaxed.
                    bool encoded = false;
                    for (std::size_t j = 0; j < n && !encoded; ++j) {
                        bool ok = in_lifted(enc.regions[j], x);
                        for (std::size_t i = 0; i < n && ok; ++i) {
                            if (i != j) ok = relaxed_rows_hold(enc, i, x);
                        }
                        encoded = ok;
                    }
                    EXPECT_EQ(disjunction, encoded) << x.transpose();
                    (disjunction ? member : nonmember)++;
                }
            }
        }
    }
    EXPECT_GT(member, 0);
    EXPECT_GT(nonmember, 0);
}

TEST(PartitionJson, Shape) {
    const auto map = build_partition(one_obstacle());
    const auto j = partition_to_json(map);
    ASSERT_EQ(j.at("pieces").size(), map.regions.size());
    double total = 0.0;
    for (const auto& p : j.at("pieces")) {
        total += p.at("area").get<double>();
        EXPECT_EQ(p.at("halfspaces").at("A").size(), p.at("halfspaces").at("b").size());
        EXPECT_GE(p.at("vertices").size(), 3u);
    }
    EXPECT_NEAR(total, 96.0, 1e-9);
}
