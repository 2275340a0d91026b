#pragma once

// Receding-horizon controller for a planar double integrator with
// region-dependent and time-dependent speed limits, posed as an MIQP.
//
// Decision vector: [x_1 .. x_N (4 each), u_0 .. u_{N-1} (2 each), zeta],
// where zeta holds one binary per (step, candidate region).

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/gcode.hpp"
#include "mambot/geometry.hpp"
#include "mambot/miqp.hpp"
#include "mambot/simplex.hpp"
#include "mambot/zones.hpp"

namespace mambot::mpc {

using Eigen::Matrix2d;
using Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector4d;
using Eigen::VectorXd;

struct State {
    double x{0.0}, y{0.0}, vx{0.0}, vy{0.0};

    Vector4d vec() const { return {x, y, vx, vy}; }
    static State from(const Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
    Vector2d position() const { return {x, y}; }
};

struct ControlInput {
    double ax{0.0}, ay{0.0};

    Vector2d vec() const { return {ax, ay}; }
};

inline Matrix4d transition(double dt) {
    Matrix4d A = Matrix4d::Identity();
    A(0, 2) = dt;
    A(1, 3) = dt;
    return A;
}

inline Eigen::Matrix<double, 4, 2> input_matrix(double dt) {
    Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
    B(2, 0) = dt;
    B(3, 1) = dt;
    return B;
}

/// Position integrates velocity, velocity integrates acceleration.
inline State dynamics_step(const State& s, const ControlInput& u, double dt) {
    if (!(dt > 0.0)) throw InputError("dynamics_step: dt must be positive");
    return {s.x + dt * s.vx, s.y + dt * s.vy, s.vx + dt * u.ax, s.vy + dt * u.ay};
}

struct MpcConfig {
    int N{25};
    double dt{1.0};
    Matrix4d Q{Matrix4d::Identity()};
    Matrix2d R{Matrix2d::Identity()};
    double u_bound{0.5};  // m/s^2 per axis
    State x_ref;
    bool soft_fallback{false};
    double soft_penalty{1e4};  // cost per unit of constraint violation
    solver::BnbConfig bnb;

    MpcConfig() { bnb.qp.method = solver::QpMethod::InteriorPoint; }

    void validate() const {
        if (N < 1) throw InputError("mpc: N must be >= 1");
        if (!(dt > 0.0)) throw InputError("mpc: dt must be positive");
        if (!(u_bound > 0.0)) throw InputError("mpc: u_bound must be positive");
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || Q.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() < -1e-12) {
            throw InputError("mpc: Q must be symmetric positive semidefinite");
        }
        if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 || R.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() <= 0.0) {
            throw InputError("mpc: R must be symmetric positive definite");
        }
        if (!(soft_penalty > 0.0)) throw InputError("mpc: soft_penalty must be positive");
    }
};

struct SolveStats {
    long nodes{0};
    long qp_iters{0};
    double wall_time{0.0};
};

struct ControlDecision {
    ControlInput u0;
    std::vector<State> predicted_states;  // N+1, first is the measured state
    std::vector<ControlInput> predicted_inputs;
    double objective{0.0};
    SolveStats solve_stats;
    std::vector<int> active_region_sequence;  // region index for steps 1..N
    solver::QpStatus status{solver::QpStatus::Optimal};
    bool degraded{false};  // solved with softened constraints
};

/// Raised when the horizon problem has no feasible solution and softening is off.
class MpcInfeasible : public NumericalError {
public:
    MpcInfeasible(const std::string& what, std::vector<std::string> diagnostics)
        : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<std::string> diagnostics_;
};

/// Built horizon problem plus the bookkeeping needed to read a solution.
struct MpcInstance {
    solver::MiqpProblem problem;
    int N{0};
    std::vector<std::vector<int>> candidates;  // per step 1..N: region indices with a binary
    std::vector<geometry::AxisBox> reach;      // per step 1..N: 4D box containing every feasible state
    Eigen::Index slack_offset{-1};             // first slack variable when softened, else -1
    bool no_candidates{false};                 // some step reaches no region; problem left empty

    Eigen::Index state_index(int k) const { return 4 * (k - 1); }  // k in 1..N
    Eigen::Index input_index(int k) const { return 4 * N + 2 * k; }  // k in 0..N-1
};

namespace detail {

// Per-axis interval bounds on every state reachable under |u| <= a and the
// per-step speed caps; positions sum the velocity bounds.
inline std::vector<geometry::AxisBox> reachable_boxes(const State& x0, const MpcConfig& cfg, const std::vector<double>& vcap) {
    std::vector<geometry::AxisBox> out;
    const Vector2d p0 = x0.position();
    Vector2d vlo(x0.vx, x0.vy), vhi(x0.vx, x0.vy);
    Vector2d plo = p0, phi = p0;
    for (int k = 1; k <= cfg.N; ++k) {
        plo += cfg.dt * vlo;
        phi += cfg.dt * vhi;
        const double cap = vcap[static_cast<std::size_t>(k)];
        for (int a = 0; a < 2; ++a) {
            vlo(a) = std::max(vlo(a) - cfg.u_bound * cfg.dt, -cap);
            vhi(a) = std::min(vhi(a) + cfg.u_bound * cfg.dt, cap);
            if (vlo(a) > vhi(a)) {
                // Unreachable cap: keep a degenerate interval at the nearest feasible value.
                const double m = std::clamp(0.5 * (vlo(a) + vhi(a)), -cap, cap);
                vlo(a) = vhi(a) = m;
            }
        }
        Vector4d lo, hi;
        lo << plo, vlo;
        hi << phi, vhi;
        out.emplace_back(lo, hi);
    }
    return out;
}

inline bool region_meets_box(const zones::Region& r, const geometry::AxisBox& box4) {
    const Vector2d lo = box4.lower().head<2>(), hi = box4.upper().head<2>();
    if ((r.bounds.lower().array() > hi.array() + 1e-9).any() || (r.bounds.upper().array() < lo.array() - 1e-9).any()) return false;
    const auto P = geometry::intersect(r.polytope, geometry::HalfspacePolytope::from_box(geometry::AxisBox(lo, hi)));
    return !geometry::is_empty(P);
}

}  // namespace detail

/// Speed limit per horizon step k = 0..N from the global schedule (or the hardware limit).
inline std::vector<double> schedule_window(const std::optional<gcode::SpeedSchedule>& schedule, std::size_t k_global, int N,
                                           double v_hardware_max = qsp::kHardwareMaxSpeed) {
    std::vector<double> w(static_cast<std::size_t>(N + 1), v_hardware_max);
    if (schedule) {
        for (int k = 0; k <= N; ++k) w[static_cast<std::size_t>(k)] = std::min(v_hardware_max, schedule->at(k_global + static_cast<std::size_t>(k)));
    }
    return w;
}

/// Assembles the horizon MIQP. With `soft`, every zone and speed row of step k
/// is relaxed by a nonnegative slack s_k penalised linearly in the cost.
inline MpcInstance build_instance(const State& x0, const MpcConfig& cfg, const std::vector<double>& window,
                                  const zones::SpeedZoneMap& map, const std::vector<zones::LiftedRegion>& lifted, bool soft = false) {
    cfg.validate();
    if (window.empty()) throw InputError("build_instance: empty schedule window");
    if (static_cast<int>(window.size()) < cfg.N + 1) throw InputError("build_instance: schedule window shorter than N+1");
    const int N = cfg.N;
    const double v_global = map.v_global();

    MpcInstance inst;
    inst.N = N;
    std::vector<double> vcap(static_cast<std::size_t>(N + 1));
    for (int k = 0; k <= N; ++k) {
        // Softened speed rows leave only the input bound to limit velocity; 1e3 m/s stands in for no cap.
        vcap[static_cast<std::size_t>(k)] = soft ? 1e3 : std::min(window[static_cast<std::size_t>(k)], v_global);
    }
    inst.reach = detail::reachable_boxes(x0, cfg, vcap);
    inst.candidates.resize(static_cast<std::size_t>(N));
    for (int k = 1; k <= N; ++k) {
        for (std::size_t j = 0; j < map.regions.size(); ++j) {
            if (detail::region_meets_box(map.regions[j], inst.reach[static_cast<std::size_t>(k - 1)])) {
                inst.candidates[static_cast<std::size_t>(k - 1)].push_back(static_cast<int>(j));
            }
        }
    }

    Eigen::Index nb = 0;
    for (const auto& c : inst.candidates) {
        nb += static_cast<Eigen::Index>(c.size());
        if (c.empty()) inst.no_candidates = true;
    }
    if (inst.no_candidates) return inst;
    const Eigen::Index nc_base = 6 * N;
    const Eigen::Index n_slack = soft ? N : 0;
    const Eigen::Index nc = nc_base + n_slack;
    const Eigen::Index n = nc + nb;
    inst.slack_offset = soft ? nc_base : -1;

    // Cost.
    MatrixXd H = MatrixXd::Zero(n, n);
    VectorXd f = VectorXd::Zero(n);
    const Vector4d r = cfg.x_ref.vec();
    for (int k = 1; k <= N; ++k) {
        const auto i = inst.state_index(k);
        H.block<4, 4>(i, i) = 2.0 * cfg.Q;
        f.segment<4>(i) = -2.0 * cfg.Q * r;
    }
    for (int k = 0; k < N; ++k) {
        const auto i = inst.input_index(k);
        H.block<2, 2>(i, i) = 2.0 * cfg.R;
    }
    for (Eigen::Index s = 0; s < n_slack; ++s) f(nc_base + s) = cfg.soft_penalty;
    const Vector4d e0 = x0.vec() - r;
    const double constant = e0.dot(cfg.Q * e0) + N * r.dot(cfg.Q * r);

    // Dynamics: x_{k+1} - A x_k - B u_k = 0, with x_0 as data.
    const Matrix4d A = transition(cfg.dt);
    const Eigen::Matrix<double, 4, 2> B = input_matrix(cfg.dt);
    MatrixXd Aeq = MatrixXd::Zero(4 * N, n);
    VectorXd beq = VectorXd::Zero(4 * N);
    for (int k = 0; k < N; ++k) {
        Aeq.block<4, 4>(4 * k, inst.state_index(k + 1)) = Matrix4d::Identity();
        if (k == 0) {
            beq.segment<4>(0) = A * x0.vec();
        } else {
            Aeq.block<4, 4>(4 * k, inst.state_index(k)) = -A;
        }
        Aeq.block<4, 2>(4 * k, inst.input_index(k)) = -B;
    }

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    std::vector<Eigen::Index> owner;
    auto add_row = [&](Eigen::RowVectorXd a, double b, Eigen::Index bin) {
        rows.push_back(std::move(a));
        rhs.push_back(b);
        owner.push_back(bin);
    };
    auto unit = [&](Eigen::Index col, double sign) {
        Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
        a(col) = sign;
        return a;
    };

    for (int k = 0; k < N; ++k) {
        for (int a = 0; a < 2; ++a) {
            add_row(unit(inst.input_index(k) + a, 1.0), cfg.u_bound, -1);
            add_row(unit(inst.input_index(k) + a, -1.0), cfg.u_bound, -1);
        }
    }
    for (Eigen::Index s = 0; s < n_slack; ++s) add_row(unit(nc_base + s, -1.0), 0.0, -1);

    Eigen::Index bin = 0;
    std::vector<std::vector<Eigen::Index>> groups;
    for (int k = 1; k <= N; ++k) {
        const auto xi = inst.state_index(k);
        const auto& box = inst.reach[static_cast<std::size_t>(k - 1)];
        const double vwin = window[static_cast<std::size_t>(k)];
        // Reachable box (implied by dynamics; makes the big-M values below valid).
        for (int c = 0; c < 4; ++c) {
            if (soft && c >= 2) continue;
            add_row(unit(xi + c, 1.0), box.upper()(c), -1);
            add_row(unit(xi + c, -1.0), -box.lower()(c), -1);
        }
        // Time-dependent speed box.
        for (int c = 2; c < 4; ++c) {
            for (double sgn : {1.0, -1.0}) {
                Eigen::RowVectorXd a = unit(xi + c, sgn);
                if (soft) a(nc_base + k - 1) = -1.0;
                add_row(a, vwin, -1);
            }
        }
        // Zone membership via big-M over the reachable box.
        std::vector<Eigen::Index> grp;
        for (int j : inst.candidates[static_cast<std::size_t>(k - 1)]) {
            const auto& set = lifted[static_cast<std::size_t>(j)].set;
            const VectorXd M = zones::big_m_over_box(set, box);
            const Eigen::Index col = nc + bin;
            for (int i = 0; i < set.rows(); ++i) {
                if (M(i) <= 0.0) continue;  // holds on the whole box already
                Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(n);
                a.segment<4>(xi) = set.A().row(i);
                a(col) = M(i);
                if (soft) a(nc_base + k - 1) = -1.0;
                add_row(a, set.b()(i) + M(i), bin);
            }
            grp.push_back(bin);
            ++bin;
        }
        // Aggregated rows implied by exactly-one membership: the speed and the
        // position bounding box of the selected region, weighted by zeta.
        if (!grp.empty()) {
            const auto& cand = inst.candidates[static_cast<std::size_t>(k - 1)];
            for (int c = 0; c < 4; ++c) {
                for (double sgn : {1.0, -1.0}) {
                    Eigen::RowVectorXd a = unit(xi + c, sgn);
                    for (std::size_t t = 0; t < cand.size(); ++t) {
                        const auto& reg = map.regions[static_cast<std::size_t>(cand[t])];
                        double cap;
                        if (c >= 2) {
                            cap = reg.v_max;
                        } else {
                            cap = sgn > 0 ? reg.bounds.upper()(c) : -reg.bounds.lower()(c);
                        }
                        a(nc + grp[t]) = -cap;
                    }
                    if (soft) a(nc_base + k - 1) = -1.0;
                    add_row(a, 0.0, -1);
                }
            }
        }
        groups.push_back(std::move(grp));
    }

    MatrixXd Ain(static_cast<Eigen::Index>(rows.size()), n);
    VectorXd bin_rhs(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Ain.row(static_cast<Eigen::Index>(i)) = rows[i];
        bin_rhs(static_cast<Eigen::Index>(i)) = rhs[i];
    }

    auto& p = inst.problem;
    p.base.H = std::move(H);
    p.base.f = std::move(f);
    p.base.constant = constant;
    p.base.A_in = std::move(Ain);
    p.base.b_in = std::move(bin_rhs);
    p.base.A_eq = std::move(Aeq);
    p.base.b_eq = std::move(beq);
    p.n_binary = nb;
    p.groups = std::move(groups);
    p.row_binary = std::move(owner);
    // Branch by splitting each step's candidates along the axis their centres spread most.
    for (const auto& cand : inst.candidates) {
        Vector2d lo = Vector2d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
        for (int j : cand) {
            const Vector2d c = map.regions[static_cast<std::size_t>(j)].bounds.center();
            lo = lo.cwiseMin(c);
            hi = hi.cwiseMax(c);
        }
        const int axis = (hi - lo)(0) >= (hi - lo)(1) ? 0 : 1;
        std::vector<double> keys;
        for (int j : cand) keys.push_back(map.regions[static_cast<std::size_t>(j)].bounds.center()(axis));
        p.group_keys.push_back(std::move(keys));
    }
    return inst;
}

inline nlohmann::json state_to_json(const State& s) { return {s.x, s.y, s.vx, s.vy}; }

inline nlohmann::json decision_to_json(const ControlDecision& d) {
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : d.predicted_states) states.push_back(state_to_json(s));
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& u : d.predicted_inputs) inputs.push_back({u.ax, u.ay});
    return {{"u0", {d.u0.ax, d.u0.ay}},
            {"predicted_states", states},
            {"predicted_inputs", inputs},
            {"objective", d.objective},
            {"status", std::string(solver::to_string(d.status))},
            {"degraded", d.degraded},
            {"active_region_sequence", d.active_region_sequence},
            {"solve_stats", {{"nodes", d.solve_stats.nodes}, {"qp_iters", d.solve_stats.qp_iters}, {"wall_time", d.solve_stats.wall_time}}}};
}

class Controller {
public:
    Controller(zones::SpeedZoneMap map, std::optional<gcode::SpeedSchedule> schedule, MpcConfig cfg)
        : map_(std::move(map)), schedule_(std::move(schedule)), cfg_(std::move(cfg)) {
        cfg_.validate();
        lifted_ = zones::lift_all(map_);
    }

    const MpcConfig& config() const { return cfg_; }
    const zones::SpeedZoneMap& map() const { return map_; }
    const std::optional<gcode::SpeedSchedule>& schedule() const { return schedule_; }

    ControlDecision step(const State& x0, std::size_t k_global) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto window = schedule_window(schedule_, k_global, cfg_.N);
        ControlDecision d;
        auto inst = build_instance(x0, cfg_, window, map_, lifted_);
        auto sol = solve(inst, x0);
        accumulate(d, sol);
        if (sol.z.size() == 0) {
            if (!cfg_.soft_fallback) {
                prev_.clear();
                throw MpcInfeasible("mpc: horizon problem infeasible at step " + std::to_string(k_global), diagnose(inst, x0, window));
            }
            inst = build_instance(x0, cfg_, window, map_, lifted_, true);
            sol = solve(inst, x0);
            accumulate(d, sol);
            d.degraded = true;
            if (sol.z.size() == 0) throw MpcInfeasible("mpc: softened problem unsolved at step " + std::to_string(k_global), {});
        }
        read(inst, sol, x0, d);
        prev_ = d.active_region_sequence;
        d.solve_stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return d;
    }

    void reset() { prev_.clear(); }

private:
    static void accumulate(ControlDecision& d, const solver::MiqpSolution& s) {
        d.solve_stats.nodes += s.nodes;
        d.solve_stats.qp_iters += s.qp_iterations;
    }

    solver::MiqpSolution solve(const MpcInstance& inst, const State& x0) const {
        if (inst.no_candidates) return {};
        solver::BnbConfig bnb = cfg_.bnb;
        bnb.hints.clear();
        if (auto h = shifted_hint(inst)) bnb.hints.push_back(*h);
        if (auto h = stay_hint(inst, x0)) bnb.hints.push_back(*h);
        for (const auto& h : cfg_.bnb.hints) bnb.hints.push_back(h);
        const auto* self = this;
        bnb.heuristic = [self, &inst](const VectorXd& z) { return self->position_hint(inst, z); };
        return solver::solve_miqp(inst.problem, bnb);
    }

    static std::optional<int> slot(const MpcInstance& inst, int k, int region) {
        const auto& c = inst.candidates[static_cast<std::size_t>(k - 1)];
        const auto it = std::find(c.begin(), c.end(), region);
        if (it == c.end()) return std::nullopt;
        return static_cast<int>(it - c.begin());
    }

    // Previous region sequence moved one step earlier, last entry repeated.
    std::optional<solver::Assignment> shifted_hint(const MpcInstance& inst) const {
        if (prev_.empty()) return std::nullopt;
        solver::Assignment a(static_cast<std::size_t>(inst.N));
        for (int k = 1; k <= inst.N; ++k) {
            const std::size_t src = std::min<std::size_t>(static_cast<std::size_t>(k), prev_.size() - 1);
            const auto s = slot(inst, k, prev_[src]);
            if (!s) return std::nullopt;
            a[static_cast<std::size_t>(k - 1)] = *s;
        }
        return a;
    }

    // Every step in the region holding the current position.
    std::optional<solver::Assignment> stay_hint(const MpcInstance& inst, const State& x0) const {
        const auto here = map_.locate(x0.position());
        for (int r : std::vector<int>(here.begin(), here.end())) {
            solver::Assignment a(static_cast<std::size_t>(inst.N));
            bool ok = true;
            for (int k = 1; k <= inst.N && ok; ++k) {
                const auto s = slot(inst, k, r);
                ok = s.has_value();
                if (ok) a[static_cast<std::size_t>(k - 1)] = *s;
            }
            if (ok) return a;
        }
        return std::nullopt;
    }

    // Region containing each relaxed position; ties and misses go to the largest binary.
    std::optional<solver::Assignment> position_hint(const MpcInstance& inst, const VectorXd& z) const {
        const auto nc = inst.problem.n_continuous();
        solver::Assignment a(static_cast<std::size_t>(inst.N));
        Eigen::Index offset = 0;
        for (int k = 1; k <= inst.N; ++k) {
            const auto& cand = inst.candidates[static_cast<std::size_t>(k - 1)];
            const Vector2d p = z.segment<2>(inst.state_index(k));
            int best = 0;
            double best_score = -1e300;
            for (std::size_t c = 0; c < cand.size(); ++c) {
                const double zeta = z(nc + offset + static_cast<Eigen::Index>(c));
                const auto& reg = map_.regions[static_cast<std::size_t>(cand[c])];
                const double inside = (reg.polytope.A() * p - reg.polytope.b()).maxCoeff();
                const double score = (inside <= 1e-9 ? 10.0 : 0.0) + zeta - 1e-3 * std::max(0.0, inside);
                if (score > best_score) {
                    best_score = score;
                    best = static_cast<int>(c);
                }
            }
            a[static_cast<std::size_t>(k - 1)] = best;
            offset += static_cast<Eigen::Index>(cand.size());
        }
        return a;
    }

    void read(const MpcInstance& inst, const solver::MiqpSolution& s, const State& x0, ControlDecision& d) const {
        d.status = s.status;
        d.objective = s.objective;
        d.predicted_states.clear();
        d.predicted_inputs.clear();
        d.active_region_sequence.clear();
        // Roll the dynamics forward from the inputs so the prediction chains exactly.
        State x = x0;
        d.predicted_states.push_back(x);
        for (int k = 0; k < inst.N; ++k) {
            const Vector2d u = s.z.segment<2>(inst.input_index(k));
            const ControlInput ci{u(0), u(1)};
            d.predicted_inputs.push_back(ci);
            x = dynamics_step(x, ci, cfg_.dt);
            d.predicted_states.push_back(x);
        }
        d.u0 = d.predicted_inputs.front();
        for (int k = 1; k <= inst.N; ++k) {
            d.active_region_sequence.push_back(inst.candidates[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(s.assignment[static_cast<std::size_t>(k - 1)])]);
        }
    }

    std::vector<std::string> diagnose(const MpcInstance& inst, const State& x0, const std::vector<double>& window) const {
        std::vector<std::string> out;
        if (map_.locate(x0.position()).empty()) out.push_back("measured position lies in no free region");
        for (int k = 1; k <= inst.N; ++k) {
            if (inst.candidates[static_cast<std::size_t>(k - 1)].empty()) {
                out.push_back("horizon step " + std::to_string(k) + ": no free region reachable");
            }
        }
        const double v0 = std::max(std::abs(x0.vx), std::abs(x0.vy));
        if (window.size() > 1 && v0 - cfg_.u_bound * cfg_.dt > window[1] + 1e-9) {
            out.push_back("speed " + std::to_string(v0) + " m/s cannot drop below the next limit " + std::to_string(window[1]) + " m/s in one step");
        }
        if (out.empty()) out.push_back("no region sequence admits a trajectory within the input bounds");
        return out;
    }

    zones::SpeedZoneMap map_;
    std::optional<gcode::SpeedSchedule> schedule_;
    MpcConfig cfg_;
    std::vector<zones::LiftedRegion> lifted_;
    std::vector<int> prev_;
};

}  // namespace mambot::mpc
