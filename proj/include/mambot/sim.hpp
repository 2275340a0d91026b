#pragma once

// Closed-loop simulation of the speed-constrained controller on the nominal
// double-integrator plant, with a post-hoc constraint audit.

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/gcode.hpp"
#include "mambot/map_file.hpp"
#include "mambot/mpc.hpp"
#include "mambot/zones.hpp"

namespace mambot::sim {

using mpc::ControlInput;
using mpc::State;

inline constexpr double kAuditTol = 1e-6;

struct Scenario {
    std::string name;
    std::string map_path;
    std::string schedule_path;  // empty when the run has no task schedule
    zones::SpeedZoneMap map;
    std::optional<gcode::SpeedSchedule> schedule;
    State x0;
    State x_ref;
    int total_steps{250};
    mpc::MpcConfig mpc;
    double arrival_radius{0.5};
    double velocity_noise{0.0};  // std-dev of additive plant velocity noise, m/s
    unsigned seed{0};

    void validate() const {
        if (total_steps < 1) throw InputError("scenario: total_steps must be >= 1");
        if (!(arrival_radius > 0.0)) throw InputError("scenario: arrival_radius must be positive");
        if (velocity_noise < 0.0) throw InputError("scenario: velocity_noise must be >= 0");
        mpc.validate();
        if (map.locate(x0.position()).empty()) throw InputError("scenario: x0 lies outside free space");
        if (!map.workspace.contains(x_ref.position())) throw InputError("scenario: goal lies outside the workspace");
    }
};

enum class ViolationKind { ZoneSpeed, ScheduleSpeed, Obstacle, Input };

inline std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::ZoneSpeed: return "zone_speed";
        case ViolationKind::ScheduleSpeed: return "schedule_speed";
        case ViolationKind::Obstacle: return "obstacle";
        case ViolationKind::Input: return "input";
    }
    return "?";
}

struct Violation {
    std::size_t step{0};
    ViolationKind kind{ViolationKind::Obstacle};
    double magnitude{0.0};
};

struct StepStats {
    long nodes{0};
    long qp_iters{0};
    double wall_time{0.0};
    double objective{0.0};
    solver::QpStatus status{solver::QpStatus::Optimal};
    bool degraded{false};
};

struct SimResult {
    std::vector<State> states;  // total_steps + 1 on a complete run
    std::vector<ControlInput> inputs;
    std::vector<int> region_idx;  // per state, -1 when outside every region
    std::optional<std::size_t> arrival_step;
    std::vector<Violation> violations;
    std::vector<StepStats> per_step_stats;
    bool aborted{false};
    std::vector<std::string> diagnostics;

    long total_nodes() const {
        long n = 0;
        for (const auto& s : per_step_stats) n += s.nodes;
        return n;
    }
    double total_solve_time() const {
        double t = 0.0;
        for (const auto& s : per_step_stats) t += s.wall_time;
        return t;
    }
};

/// Raised when the controller cannot produce an input; carries the run up to that point.
class SimAborted : public NumericalError {
public:
    SimAborted(const std::string& what, SimResult partial) : NumericalError(what), partial_(std::move(partial)) {}
    const SimResult& partial() const noexcept { return partial_; }

private:
    SimResult partial_;
};

namespace detail {

// Signed depth of p inside P (positive inside), using normalized rows.
inline double depth(const geometry::HalfspacePolytope& P, const Eigen::Vector2d& p) {
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < P.rows(); ++i) {
        const double nrm = P.A().row(i).norm();
        d = std::min(d, (P.b()(i) - P.A().row(i).dot(p)) / nrm);
    }
    return d;
}

inline State parse_state(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 4) throw InputError(std::string("scenario: ") + what + " must be [x, y, vx, vy]");
    for (const auto& v : j) {
        if (!v.is_number()) throw InputError(std::string("scenario: ") + what + " values must be numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline Eigen::VectorXd parse_diag(const nlohmann::json& j, Eigen::Index n, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
        throw InputError(std::string("scenario: ") + what + " must list " + std::to_string(n) + " diagonal entries");
    }
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = j[static_cast<std::size_t>(i)].get<double>();
    return d;
}

}  // namespace detail

/// Checks every produced state (steps >= 1) and input against the map, schedule and input box.
inline std::vector<Violation> audit(const std::vector<State>& states, const std::vector<ControlInput>& inputs,
                                    const zones::SpeedZoneMap& map, const std::optional<gcode::SpeedSchedule>& schedule,
                                    double u_bound, double tol = kAuditTol) {
    if (!states.empty() && inputs.size() + 1 != states.size() && inputs.size() != states.size()) {
        throw DimensionError("audit: expected one input per transition");
    }
    std::vector<Violation> out;
    for (std::size_t k = 1; k < states.size(); ++k) {
        const State& s = states[k];
        const Eigen::Vector2d p = s.position();
        const double speed = std::max(std::abs(s.vx), std::abs(s.vy));
        double inside = 0.0;
        for (const auto& o : map.obstacles) inside = std::max(inside, detail::depth(o, p));
        const auto here = map.locate(p);
        if (inside > tol) {
            out.push_back({k, ViolationKind::Obstacle, inside});
        } else if (here.empty()) {
            double gap = std::numeric_limits<double>::infinity();
            for (const auto& r : map.regions) gap = std::min(gap, -detail::depth(r.polytope, p));
            if (gap > tol) out.push_back({k, ViolationKind::Obstacle, gap});
        }
        if (!here.empty()) {
            // Boundary states may take any region they touch.
            double allowed = 0.0;
            for (auto j : here) allowed = std::max(allowed, map.regions[j].v_max);
            if (speed - allowed > tol) out.push_back({k, ViolationKind::ZoneSpeed, speed - allowed});
        }
        if (schedule) {
            const double lim = schedule->at(k);
            if (speed - lim > tol) out.push_back({k, ViolationKind::ScheduleSpeed, speed - lim});
        }
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const double a = std::max(std::abs(inputs[k].ax), std::abs(inputs[k].ay));
        if (a - u_bound > tol) out.push_back({k, ViolationKind::Input, a - u_bound});
    }
    return out;
}

inline std::optional<std::size_t> first_arrival(const std::vector<State>& states, const State& goal, double radius) {
    for (std::size_t k = 0; k < states.size(); ++k) {
        if ((states[k].position() - goal.position()).norm() <= radius) return k;
    }
    return std::nullopt;
}

inline SimResult run_closed_loop(const Scenario& s) {
    s.validate();
    auto cfg = s.mpc;
    cfg.x_ref = s.x_ref;
    mpc::Controller ctl(s.map, s.schedule, cfg);
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    SimResult r;
    r.states.push_back(s.x0);
    const auto locate_first = [&](const State& x) {
        const auto h = s.map.locate(x.position());
        return h.empty() ? -1 : static_cast<int>(h.front());
    };
    r.region_idx.push_back(locate_first(s.x0));
    auto finish = [&] {
        r.arrival_step = first_arrival(r.states, s.x_ref, s.arrival_radius);
        r.violations = audit(r.states, r.inputs, s.map, s.schedule, cfg.u_bound);
    };

    for (int k = 0; k < s.total_steps; ++k) {
        mpc::ControlDecision d;
        try {
            d = ctl.step(r.states.back(), static_cast<std::size_t>(k));
        } catch (const mpc::MpcInfeasible& e) {
            r.aborted = true;
            r.diagnostics = e.diagnostics();
            r.diagnostics.insert(r.diagnostics.begin(), e.what());
            finish();
            throw SimAborted(e.what(), std::move(r));
        }
        r.per_step_stats.push_back({d.solve_stats.nodes, d.solve_stats.qp_iters, d.solve_stats.wall_time, d.objective, d.status, d.degraded});
        State next = mpc::dynamics_step(r.states.back(), d.u0, cfg.dt);
        if (s.velocity_noise > 0.0) {
            next.vx += s.velocity_noise * noise(rng);
            next.vy += s.velocity_noise * noise(rng);
        }
        r.inputs.push_back(d.u0);
        r.states.push_back(next);
        r.region_idx.push_back(d.active_region_sequence.empty() ? locate_first(next) : d.active_region_sequence.front());
    }
    finish();
    return r;
}

/// Reads a scenario file; map and schedule paths resolve relative to the scenario file.
inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("invalid scenario file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw InputError("scenario must be a JSON object");
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path q(p);
        return (q.is_absolute() ? q : base / q).lexically_normal().string();
    };
    Scenario s;
    try {
        s.name = j.value("name", std::filesystem::path(path).stem().string());
        if (!j.contains("map")) throw InputError("scenario needs a 'map'");
        s.map_path = resolve(j.at("map").get<std::string>());
        s.map = zones::build_partition(geometry::load_map(s.map_path));
        const std::string sched = j.value("schedule", "none");
        if (sched != "none") {
            s.schedule_path = resolve(sched);
            s.schedule = gcode::load_schedule(s.schedule_path);
        }
        if (!j.contains("x0") || !j.contains("x_ref")) throw InputError("scenario needs 'x0' and 'x_ref'");
        s.x0 = detail::parse_state(j.at("x0"), "x0");
        s.x_ref = detail::parse_state(j.at("x_ref"), "x_ref");
        s.total_steps = j.value("total_steps", 250);
        s.arrival_radius = j.value("arrival_radius", 0.5);
        s.velocity_noise = j.value("velocity_noise", 0.0);
        s.seed = j.value("seed", 0u);
        if (j.contains("mpc")) {
            const auto& m = j.at("mpc");
            s.mpc.N = m.value("N", s.mpc.N);
            s.mpc.dt = m.value("dt", s.mpc.dt);
            s.mpc.u_bound = m.value("u_bound", s.mpc.u_bound);
            s.mpc.soft_fallback = m.value("soft_fallback", s.mpc.soft_fallback);
            s.mpc.soft_penalty = m.value("soft_penalty", s.mpc.soft_penalty);
            if (m.contains("Q_diag")) s.mpc.Q = detail::parse_diag(m.at("Q_diag"), 4, "Q_diag").asDiagonal();
            if (m.contains("R_diag")) s.mpc.R = detail::parse_diag(m.at("R_diag"), 2, "R_diag").asDiagonal();
            s.mpc.bnb.abs_gap = m.value("abs_gap", s.mpc.bnb.abs_gap);
            s.mpc.bnb.rel_gap = m.value("rel_gap", s.mpc.bnb.rel_gap);
            s.mpc.bnb.max_nodes = m.value("max_nodes", s.mpc.bnb.max_nodes);
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("invalid scenario file " + path + ": " + e.what());
    }
    if (s.schedule && std::abs(s.schedule->dt - s.mpc.dt) > 1e-12) {
        throw InputError("scenario: schedule dt differs from controller dt");
    }
    s.validate();
    return s;
}

inline constexpr const char* kTrajectoryHeader = "step,t_s,x_m,y_m,vx_mps,vy_mps,ax_mps2,ay_mps2,region_idx";

/// One row per state; the input column holds the input applied from that state (blank on the last row).
inline void write_trajectory_csv(std::ostream& out, const SimResult& r, double dt) {
    out << kTrajectoryHeader << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < r.states.size(); ++k) {
        const auto& s = r.states[k];
        out << k << ',' << static_cast<double>(k) * dt << ',' << s.x << ',' << s.y << ',' << s.vx << ',' << s.vy << ',';
        if (k < r.inputs.size()) {
            out << r.inputs[k].ax << ',' << r.inputs[k].ay;
        } else {
            out << ',';
        }
        out << ',' << (k < r.region_idx.size() ? r.region_idx[k] : -1) << '\n';
    }
}

inline nlohmann::json violations_to_json(const std::vector<Violation>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : v) out.push_back({{"step", x.step}, {"kind", std::string(to_string(x.kind))}, {"magnitude", x.magnitude}});
    return out;
}

inline std::string summary_line(const SimResult& r) {
    std::ostringstream os;
    os << "arrival_step=" << (r.arrival_step ? std::to_string(*r.arrival_step) : std::string("never")) << " violations=" << r.violations.size()
       << " total_nodes=" << r.total_nodes();
    return os.str();
}

}  // namespace mambot::sim
