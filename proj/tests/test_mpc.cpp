#include <gtest/gtest.h>

#include <random>

#include "mambot/mpc.hpp"
#include "oracles.hpp"

using namespace mambot;
using namespace mambot::mpc;
using mambot::oracle::enumerate_sequences;

namespace {

zones::SpeedZoneMap map_from(const std::string& text) { return zones::build_partition(geometry::parse_map(nlohmann::json::parse(text))); }

zones::SpeedZoneMap open_map() { return map_from(R"([{"name":"floor","kind":"workspace","box":[-20,-20,20,20]}])"); }

// Workspace split into left / slow middle / right strips.
zones::SpeedZoneMap strip_map() {
    return map_from(R"([{"name":"floor","kind":"workspace","box":[0,0,6,2]},
                        {"name":"slow","kind":"zone","box":[2,0,4,2],"v_max":0.3}])");
}

MpcConfig small_config(int N) {
    MpcConfig c;
    c.N = N;
    c.bnb.abs_gap = 1e-9;
    return c;
}

struct Built {
    MpcInstance inst;
    solver::MiqpSolution sol;
};

Built solve_direct(const State& x0, const MpcConfig& cfg, const zones::SpeedZoneMap& map, const std::vector<double>& window) {
    auto inst = build_instance(x0, cfg, window, map, zones::lift_all(map));
    auto sol = solver::solve_miqp(inst.problem, cfg.bnb);
    return {std::move(inst), std::move(sol)};
}

}  // namespace

TEST(Dynamics, Examples) {
    const State a = dynamics_step({0, 0, 1, 0}, {1, 0}, 1.0);
    EXPECT_DOUBLE_EQ(a.x, 1.0);
    EXPECT_DOUBLE_EQ(a.y, 0.0);
    EXPECT_DOUBLE_EQ(a.vx, 2.0);
    EXPECT_DOUBLE_EQ(a.vy, 0.0);
    for (double dt : {0.1, 1.0, 7.0}) {
        const State e = dynamics_step({5, -3, 0, 0}, {0, 0}, dt);
        EXPECT_EQ(e.vec(), Vector4d(5, -3, 0, 0));
    }
    const State b = dynamics_step({0, 0, 0, 2}, {0, -1}, 0.5);
    EXPECT_EQ(b.vec(), Vector4d(0, 1, 0, 1.5));
}

TEST(Dynamics, MatchesMatrices) {
    const State x{1.5, -2.0, 0.3, -0.7};
    const ControlInput u{0.2, -0.4};
    const double dt = 0.7;
    const Vector4d expect = transition(dt) * x.vec() + input_matrix(dt) * u.vec();
    EXPECT_LE((dynamics_step(x, u, dt).vec() - expect).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(dynamics_step(x, u, 0.0), InputError);
}

TEST(MpcConfig, Validation) {
    MpcConfig c;
    EXPECT_NO_THROW(c.validate());
    c.N = 0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.dt = -1.0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.R(0, 0) = 0.0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.Q(0, 0) = -1.0;
    EXPECT_THROW(c.validate(), InputError);
    c = {};
    c.Q(0, 1) = 0.5;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(BuildInstance, AtReferenceIsZero) {
    const auto map = open_map();
    auto cfg = small_config(1);
    const auto b = solve_direct({}, cfg, map, {1.0, 1.0});
    ASSERT_EQ(b.sol.status, solver::QpStatus::Optimal);
    EXPECT_NEAR(b.sol.objective, 0.0, 1e-9);
    EXPECT_NEAR(b.sol.z(b.inst.input_index(0)), 0.0, 1e-9);
    EXPECT_NEAR(b.sol.z(b.inst.input_index(0) + 1), 0.0, 1e-9);
}

TEST(BuildInstance, TwoStepLeastSquares) {
    const auto map = open_map();
    auto cfg = small_config(2);
    cfg.u_bound = 10.0;
    const double p0 = -0.5, v0 = 0.1;
    const auto b = solve_direct({p0, 0, v0, 0}, cfg, map, {1.0, 1.0, 1.0});
    ASSERT_EQ(b.sol.status, solver::QpStatus::Optimal);

    // Residual stack [x1, v1, x2, v2, u0, u1] = c + G u.
    Eigen::Matrix<double, 6, 2> G;
    G << 0, 0, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1;
    Eigen::Matrix<double, 6, 1> c;
    c << p0 + v0, v0, p0 + 2 * v0, v0, 0, 0;
    const Vector2d u = -(G.transpose() * G).ldlt().solve(G.transpose() * c);
    EXPECT_NEAR(b.sol.z(b.inst.input_index(0)), u(0), 1e-7);
    EXPECT_NEAR(b.sol.z(b.inst.input_index(1)), u(1), 1e-7);
    EXPECT_NEAR(b.sol.z(b.inst.input_index(0) + 1), 0.0, 1e-9);
    EXPECT_NEAR(b.sol.objective, (c + G * u).squaredNorm() + p0 * p0 + v0 * v0, 1e-7);
}

TEST(BuildInstance, EmptyWindowRejected) {
    const auto map = open_map();
    const auto lifted = zones::lift_all(map);
    EXPECT_THROW(build_instance({}, small_config(2), {}, map, lifted), InputError);
    EXPECT_THROW(build_instance({}, small_config(2), {1.0, 1.0}, map, lifted), InputError);
}

TEST(BuildInstance, ContourWindowCapsSpeed) {
    const auto map = open_map();
    gcode::SpeedSchedule sched;
    sched.dt = 1.0;
    sched.v_max_per_step = {0.7, 0.7, 0.7, 0.3, 0.3, 0.3, 0.3, 0.7, 0.7};
    auto cfg = small_config(8);
    cfg.x_ref = {15, 10, 0, 0};
    Controller ctl(map, sched, cfg);
    const auto d = ctl.step({0, 0, 0.7, 0.7}, 0);
    ASSERT_EQ(d.status, solver::QpStatus::Optimal);
    for (int k = 1; k <= cfg.N; ++k) {
        const double lim = sched.at(static_cast<std::size_t>(k));
        EXPECT_LE(std::abs(d.predicted_states[static_cast<std::size_t>(k)].vx), lim + 1e-6) << k;
        EXPECT_LE(std::abs(d.predicted_states[static_cast<std::size_t>(k)].vy), lim + 1e-6) << k;
    }
    EXPECT_NEAR(std::abs(d.predicted_states[4].vx), 0.3, 1e-4);
}

TEST(BuildInstance, ReachableBoxesContainSolution) {
    const auto map = strip_map();
    auto cfg = small_config(6);
    cfg.x_ref = {5.5, 1.5, 0, 0};
    const auto b = solve_direct({0.5, 0.5, 0.2, 0.1}, cfg, map, std::vector<double>(7, 1.0));
    ASSERT_EQ(b.sol.status, solver::QpStatus::Optimal);
    for (int k = 1; k <= cfg.N; ++k) {
        const Vector4d x = b.sol.z.segment<4>(b.inst.state_index(k));
        EXPECT_TRUE(b.inst.reach[static_cast<std::size_t>(k - 1)].contains(x, 1e-6)) << k;
    }
}

TEST(Controller, AtReferenceHolds) {
    Controller ctl(open_map(), std::nullopt, small_config(5));
    const auto d = ctl.step({}, 0);
    EXPECT_NEAR(d.u0.ax, 0.0, 1e-9);
    EXPECT_NEAR(d.u0.ay, 0.0, 1e-9);
    EXPECT_NEAR(d.objective, 0.0, 1e-9);
    EXPECT_FALSE(d.degraded);
}

TEST(Controller, Symmetry) {
    Controller ctl(open_map(), std::nullopt, small_config(5));
    const auto d = ctl.step({-1, 0, 0, 0}, 0);
    EXPECT_GT(d.u0.ax, 0.0);
    EXPECT_NEAR(d.u0.ay, 0.0, 1e-9);
}

TEST(Controller, DecisionInvariants) {
    const auto map = strip_map();
    auto cfg = small_config(6);
    cfg.x_ref = {5.5, 1.5, 0, 0};
    Controller ctl(map, std::nullopt, cfg);
    const State x0{0.5, 0.5, 0.0, 0.0};
    const auto d = ctl.step(x0, 0);
    ASSERT_EQ(d.predicted_states.size(), 7u);
    ASSERT_EQ(d.active_region_sequence.size(), 6u);
    EXPECT_EQ(d.predicted_states[0].vec(), x0.vec());
    EXPECT_GE(d.objective, 0.0);
    for (int k = 0; k < cfg.N; ++k) {
        const auto next = dynamics_step(d.predicted_states[static_cast<std::size_t>(k)], d.predicted_inputs[static_cast<std::size_t>(k)], cfg.dt);
        EXPECT_LE((next.vec() - d.predicted_states[static_cast<std::size_t>(k + 1)].vec()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE(std::abs(d.predicted_inputs[static_cast<std::size_t>(k)].ax), cfg.u_bound + 1e-6);
        EXPECT_LE(std::abs(d.predicted_inputs[static_cast<std::size_t>(k)].ay), cfg.u_bound + 1e-6);
    }
    for (int k = 1; k <= cfg.N; ++k) {
        const auto& s = d.predicted_states[static_cast<std::size_t>(k)];
        const auto& reg = map.regions[static_cast<std::size_t>(d.active_region_sequence[static_cast<std::size_t>(k - 1)])];
        EXPECT_LE((reg.polytope.A() * s.position() - reg.polytope.b()).maxCoeff(), 1e-6) << k;
        EXPECT_LE(std::max(std::abs(s.vx), std::abs(s.vy)), reg.v_max + 1e-6) << k;
    }
}

TEST(Controller, MatchesEnumerationOnStripMap) {
    const auto map = strip_map();
    ASSERT_EQ(map.regions.size(), 3u);
    auto cfg = small_config(3);
    cfg.x_ref = {5, 1, 0, 0};
    const State x0{1.2, 1.0, 0.6, 0.0};
    const std::vector<double> window(4, 1.0);
    const auto oracle = enumerate_sequences(x0, cfg, map, window);
    ASSERT_TRUE(oracle.has_value());
    Controller ctl(map, std::nullopt, cfg);
    const auto d = ctl.step(x0, 0);
    EXPECT_NEAR(d.objective, *oracle, 1e-6);
}

TEST(Controller, RandomInstancesMatchEnumeration) {
    const auto map = strip_map();
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> px(0.2, 5.8), py(0.2, 1.8), vel(-0.3, 0.3);
    std::uniform_int_distribution<int> horizon(1, 3);
    int compared = 0;
    for (int t = 0; t < 12; ++t) {
        auto cfg = small_config(horizon(rng));
        cfg.x_ref = {px(rng), py(rng), 0, 0};
        const State x0{px(rng), py(rng), vel(rng), vel(rng)};
        const std::vector<double> window(static_cast<std::size_t>(cfg.N + 1), 1.0);
        const auto oracle = enumerate_sequences(x0, cfg, map, window);
        Controller ctl(map, std::nullopt, cfg);
        if (!oracle) {
            EXPECT_THROW(ctl.step(x0, 0), MpcInfeasible);
            continue;
        }
        const auto d = ctl.step(x0, 0);
        EXPECT_NEAR(d.objective, *oracle, 1e-6) << t;
        ++compared;
    }
    EXPECT_GT(compared, 6);
}

TEST(Controller, WarmAndColdAgree) {
    const auto map = strip_map();
    auto cfg = small_config(6);
    cfg.x_ref = {5.5, 1.0, 0, 0};
    Controller warm(map, std::nullopt, cfg);
    State x{0.5, 1.0, 0.0, 0.0};
    for (int k = 0; k < 4; ++k) {
        const auto d = warm.step(x, static_cast<std::size_t>(k));
        x = dynamics_step(x, d.u0, cfg.dt);
    }
    const auto dw = warm.step(x, 4);
    Controller cold(map, std::nullopt, cfg);
    const auto dc = cold.step(x, 4);
    EXPECT_NEAR(dw.objective, dc.objective, 1e-6);
}

TEST(Controller, InfeasibleWithoutFallback) {
    gcode::SpeedSchedule sched;
    sched.dt = 1.0;
    sched.v_max_per_step = {1.0, 0.3};
    auto cfg = small_config(3);
    Controller ctl(open_map(), sched, cfg);
    try {
        ctl.step({0, 0, 1.0, 0}, 0);
        FAIL() << "expected MpcInfeasible";
    } catch (const MpcInfeasible& e) {
        ASSERT_FALSE(e.diagnostics().empty());
        EXPECT_NE(e.diagnostics().front().find("cannot drop"), std::string::npos);
    }
}

TEST(Controller, SoftFallbackDegrades) {
    gcode::SpeedSchedule sched;
    sched.dt = 1.0;
    sched.v_max_per_step = {1.0, 0.3};
    auto cfg = small_config(3);
    cfg.soft_fallback = true;
    Controller ctl(open_map(), sched, cfg);
    const auto d = ctl.step({0, 0, 1.0, 0}, 0);
    EXPECT_TRUE(d.degraded);
    EXPECT_NEAR(d.u0.ax, -cfg.u_bound, 1e-6);
}

TEST(Controller, DecisionJson) {
    Controller ctl(open_map(), std::nullopt, small_config(2));
    const auto j = decision_to_json(ctl.step({-1, 0, 0, 0}, 0));
    EXPECT_EQ(j.at("predicted_states").size(), 3u);
    EXPECT_EQ(j.at("active_region_sequence").size(), 2u);
    EXPECT_EQ(j.at("status"), "optimal");
    EXPECT_TRUE(j.at("solve_stats").contains("nodes"));
}
