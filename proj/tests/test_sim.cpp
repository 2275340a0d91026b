#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mambot/sim.hpp"

using namespace mambot;
using namespace mambot::sim;

namespace {

zones::SpeedZoneMap map_from(const std::string& text) { return zones::build_partition(geometry::parse_map(nlohmann::json::parse(text))); }

zones::SpeedZoneMap open_map() { return map_from(R"([{"name":"floor","kind":"workspace","box":[-20,-20,20,20]}])"); }

zones::SpeedZoneMap cell_map() {
    return map_from(R"([{"name":"floor","kind":"workspace","box":[0,0,12,8]},
                        {"name":"slow","kind":"zone","box":[4,2,8,6],"v_max":0.4},
                        {"name":"machine","kind":"obstacle","box":[5,3,7,5]}])");
}

Scenario small_scenario(zones::SpeedZoneMap map, State x0, State goal, int steps, int N) {
    Scenario s;
    s.name = "test";
    s.map = std::move(map);
    s.x0 = x0;
    s.x_ref = goal;
    s.total_steps = steps;
    s.mpc.N = N;
    return s;
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
    const auto dir = std::filesystem::temp_directory_path() / "mambot_sim_test";
    std::filesystem::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST(RunClosedLoop, AtGoalArrivesImmediately) {
    auto s = small_scenario(open_map(), {}, {}, 10, 5);
    const auto r = run_closed_loop(s);
    ASSERT_TRUE(r.arrival_step.has_value());
    EXPECT_EQ(*r.arrival_step, 0u);
    ASSERT_EQ(r.inputs.size(), 10u);
    for (const auto& u : r.inputs) {
        EXPECT_NEAR(u.ax, 0.0, 1e-9);
        EXPECT_NEAR(u.ay, 0.0, 1e-9);
    }
    EXPECT_TRUE(r.violations.empty());
}

TEST(RunClosedLoop, StatesChainUnderDynamics) {
    auto s = small_scenario(cell_map(), {1, 1, 0, 0}, {11, 7, 0, 0}, 25, 6);
    const auto r = run_closed_loop(s);
    ASSERT_EQ(r.states.size(), 26u);
    EXPECT_EQ(r.states.front().vec(), s.x0.vec());
    for (std::size_t k = 0; k < r.inputs.size(); ++k) {
        const auto next = mpc::dynamics_step(r.states[k], r.inputs[k], s.mpc.dt);
        EXPECT_EQ(next.vec(), r.states[k + 1].vec()) << k;
    }
    ASSERT_TRUE(r.arrival_step.has_value());
    EXPECT_TRUE(r.violations.empty());
    for (const auto& x : r.states) EXPECT_LE(std::max(std::abs(x.vx), std::abs(x.vy)), 1.0 + 1e-6);
}

TEST(RunClosedLoop, RealizedStateMatchesOneStepPrediction) {
    const auto map = cell_map();
    mpc::MpcConfig cfg;
    cfg.N = 6;
    cfg.x_ref = {11, 7, 0, 0};
    mpc::Controller ctl(map, std::nullopt, cfg);
    State x{1, 1, 0, 0};
    for (int k = 0; k < 8; ++k) {
        const auto d = ctl.step(x, static_cast<std::size_t>(k));
        const auto next = mpc::dynamics_step(x, d.u0, cfg.dt);
        EXPECT_LE((next.vec() - d.predicted_states[1].vec()).cwiseAbs().maxCoeff(), 1e-9) << k;
        x = next;
    }
}

TEST(RunClosedLoop, ScheduleNeverShortensArrival) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> zx(4.0, 12.0), zy(1.0, 5.0);
    std::uniform_int_distribution<int> task(0, 2);
    const double speeds[] = {0.3, 0.5, 0.7};
    for (int t = 0; t < 5; ++t) {
        const double x = zx(rng), y = zy(rng);
        std::ostringstream os;
        os << R"([{"name":"floor","kind":"workspace","box":[0,0,20,8]},)"
           << R"({"name":"slow","kind":"zone","box":[)" << x << ',' << y << ',' << x + 3.0 << ',' << y + 2.0 << R"(],"v_max":0.4}])";
        auto s = small_scenario(map_from(os.str()), {1, 1, 0, 0}, {19, 7, 0, 0}, 60, 6);
        const auto plain = run_closed_loop(s);
        gcode::SpeedSchedule sched;
        sched.dt = 1.0;
        for (int block = 0; block < 6; ++block) {
            const double v = speeds[task(rng)];
            for (int k = 0; k < 10; ++k) sched.v_max_per_step.push_back(v);
        }
        s.schedule = sched;
        const auto timed = run_closed_loop(s);
        ASSERT_TRUE(plain.arrival_step.has_value()) << t;
        ASSERT_TRUE(timed.arrival_step.has_value()) << t;
        EXPECT_GE(*timed.arrival_step, *plain.arrival_step) << t;
        EXPECT_TRUE(plain.violations.empty()) << t;
        EXPECT_TRUE(timed.violations.empty()) << t;
    }
}

TEST(RunClosedLoop, GoalInsideObstacleNeverArrives) {
    auto s = small_scenario(cell_map(), {1, 1, 0, 0}, {6, 4, 0, 0}, 15, 5);
    const auto r = run_closed_loop(s);
    EXPECT_FALSE(r.arrival_step.has_value());
    EXPECT_TRUE(r.violations.empty());
}

TEST(Audit, CleanTrajectory) {
    const auto map = cell_map();
    const std::vector<State> xs = {{1, 1, 0, 0}, {1.3, 1, 0.3, 0}, {1.6, 1, 0.3, 0}};
    const std::vector<ControlInput> us = {{0.3, 0}, {0, 0}};
    EXPECT_TRUE(audit(xs, us, map, std::nullopt, 0.5).empty());
}

TEST(Audit, ObstacleEntry) {
    const auto map = cell_map();
    const std::vector<State> xs = {{4.5, 4, 0, 0}, {5.0, 4, 0.1, 0}, {6.0, 4, 0.1, 0}, {7.5, 4, 0.1, 0}};
    const std::vector<ControlInput> us = {{0.1, 0}, {0, 0}, {0, 0}};
    const auto v = audit(xs, us, map, std::nullopt, 0.5);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].step, 2u);
    EXPECT_EQ(v[0].kind, ViolationKind::Obstacle);
    EXPECT_NEAR(v[0].magnitude, 1.0, 1e-12);
}

TEST(Audit, ZoneSpeedMagnitude) {
    const auto map = cell_map();
    const std::vector<State> xs = {{4.5, 2.5, 0.4, 0}, {5.0, 2.5, 0.5, 0}};
    const std::vector<ControlInput> us = {{0.1, 0}};
    const auto v = audit(xs, us, map, std::nullopt, 0.5);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].step, 1u);
    EXPECT_EQ(v[0].kind, ViolationKind::ZoneSpeed);
    EXPECT_NEAR(v[0].magnitude, 0.1, 1e-12);
}

TEST(Audit, ScheduleAndInput) {
    const auto map = open_map();
    gcode::SpeedSchedule sched;
    sched.dt = 1.0;
    sched.v_max_per_step = {0.7, 0.3};
    const std::vector<State> xs = {{0, 0, 0, 0}, {0, 0, 0.6, 0}};
    const std::vector<ControlInput> us = {{0.6, 0}};
    const auto v = audit(xs, us, map, sched, 0.5);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[0].kind, ViolationKind::ScheduleSpeed);
    EXPECT_NEAR(v[0].magnitude, 0.3, 1e-12);
    EXPECT_EQ(v[1].kind, ViolationKind::Input);
    EXPECT_EQ(v[1].step, 0u);
    EXPECT_NEAR(v[1].magnitude, 0.1, 1e-12);
}

TEST(Audit, LengthMismatchRejected) {
    const std::vector<State> xs(4);
    const std::vector<ControlInput> us(1);
    EXPECT_THROW(audit(xs, us, open_map(), std::nullopt, 0.5), DimensionError);
}

TEST(TrajectoryCsv, HeaderAndRows) {
    auto s = small_scenario(open_map(), {-1, 0, 0, 0}, {}, 3, 3);
    const auto r = run_closed_loop(s);
    std::ostringstream os;
    write_trajectory_csv(os, r, 1.0);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,t_s,x_m,y_m,vx_mps,vy_mps,ax_mps2,ay_mps2,region_idx");
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 4);
}

TEST(SummaryLine, Fields) {
    SimResult r;
    EXPECT_EQ(summary_line(r), "arrival_step=never violations=0 total_nodes=0");
    r.arrival_step = 12;
    r.per_step_stats.push_back({5, 10, 0.1, 1.0, solver::QpStatus::Optimal, false});
    EXPECT_EQ(summary_line(r), "arrival_step=12 violations=0 total_nodes=5");
}

TEST(LoadScenario, ShippedFixtures) {
    const std::string dir = std::string(MAMBOT_DATA_DIR) + "/scenarios/";
    const auto s1 = load_scenario(dir + "scenario1.json");
    EXPECT_FALSE(s1.schedule.has_value());
    EXPECT_EQ(s1.total_steps, 250);
    EXPECT_EQ(s1.mpc.N, 25);
    EXPECT_EQ(s1.x0.vec(), Eigen::Vector4d(-100, -20, 0, 0));
    EXPECT_EQ(s1.x_ref.vec(), Eigen::Vector4d(0, 15, 0, 0));
    const auto s2 = load_scenario(dir + "scenario2.json");
    ASSERT_TRUE(s2.schedule.has_value());
    EXPECT_DOUBLE_EQ(s2.schedule->at(0), 0.7);
    EXPECT_DOUBLE_EQ(s2.schedule->at(51), 0.3);
    EXPECT_DOUBLE_EQ(s2.schedule->at(80), 0.3);
    EXPECT_DOUBLE_EQ(s2.schedule->at(81), 0.5);
    EXPECT_DOUBLE_EQ(s2.schedule->at(150), 0.3);
    EXPECT_DOUBLE_EQ(s2.schedule->at(250), 0.7);
}

TEST(LoadScenario, Errors) {
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), InputError);
    EXPECT_THROW(load_scenario(temp_file("bad.json", "{not json").string()), InputError);
    EXPECT_THROW(load_scenario(temp_file("nomap.json", R"({"x0":[0,0,0,0],"x_ref":[1,1,0,0]})").string()), InputError);
    const std::string map = std::string(MAMBOT_DATA_DIR) + "/maps/blocked_cell.json";
    EXPECT_THROW(load_scenario(temp_file("nox0.json", R"({"map":")" + map + R"("})").string()), InputError);
    EXPECT_THROW(load_scenario(temp_file("short.json", R"({"map":")" + map + R"(","x0":[1,1,0],"x_ref":[2,2,0,0]})").string()),
                 InputError);
    EXPECT_THROW(load_scenario(temp_file("inobs.json", R"({"map":")" + map + R"(","x0":[6,4,0,0],"x_ref":[2,2,0,0]})").string()),
                 InputError);
    EXPECT_THROW(load_scenario(temp_file("steps.json", R"({"map":")" + map + R"(","x0":[1,1,0,0],"x_ref":[2,2,0,0],"total_steps":0})").string()),
                 InputError);
    EXPECT_THROW(load_scenario(temp_file("nosched.json", R"({"map":")" + map + R"(","schedule":"missing.json","x0":[1,1,0,0],"x_ref":[2,2,0,0]})").string()),
                 InputError);
}
