// mambot: command-line front end for calibration fitting, schedule extraction,
// partition inspection, single-step planning and closed-loop simulation.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/gcode.hpp"
#include "mambot/map_file.hpp"
#include "mambot/mpc.hpp"
#include "mambot/qsp.hpp"
#include "mambot/sim.hpp"
#include "mambot/zones.hpp"

#ifndef MAMBOT_VERSION
#define MAMBOT_VERSION "0.0.0"
#endif

namespace {

using namespace mambot;
using json = nlohmann::json;

enum Exit : int { kOk = 0, kInput = 1, kNumerical = 2, kNotReached = 3, kViolations = 4 };

std::string sha256_file(const std::string& path) {
    const std::string data = gcode::read_text_file(path);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw NumericalError("sha256 failed for " + path);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)), t0_(std::chrono::steady_clock::now()) {}

    void config(const std::string& key, json value) { config_[key] = std::move(value); }
    void input(const std::string& path) { inputs_[path] = sha256_file(path); }

    json to_json() const {
        return {{"command", command_},
                {"config", config_},
                {"inputs", inputs_},
                {"version", MAMBOT_VERSION},
                {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()}};
    }

    /// Beside the output file when there is one, otherwise on stderr.
    void emit(const std::string& out_path) const {
        if (out_path.empty() || out_path == "-") {
            std::cerr << to_json().dump() << '\n';
            return;
        }
        write_json(out_path + ".manifest.json", to_json());
    }

    static void write_json(const std::string& path, const json& j) {
        std::ofstream f(path);
        if (!f) throw InputError("cannot write " + path);
        f << j.dump(2) << '\n';
    }

private:
    std::string command_;
    json config_ = json::object();
    json inputs_ = json::object();
    std::chrono::steady_clock::time_point t0_;
};

void emit_json(const std::string& out, const json& j) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
    } else {
        Manifest::write_json(out, j);
    }
}

mpc::State parse_state(const std::string& text, const char* what) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (qsp::detail::trim(item.substr(used)).size() != 0) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InputError(std::string(what) + ": malformed number '" + item + "'");
        }
    }
    if (v.size() != 4) throw InputError(std::string(what) + " must be four comma-separated values x,y,vx,vy");
    return {v[0], v[1], v[2], v[3]};
}

struct Globals {
    unsigned seed{0};
    bool seed_set{false};
    bool verbose{false};
};

int cmd_fit_qsp(const std::string& csv, const std::string& task_name, std::optional<double> q_tol, const std::string& out) {
    Manifest man("fit-qsp");
    man.input(csv);
    const auto task = qsp::task_from_string(task_name);
    man.config("task", std::string(qsp::to_string(task)));
    const auto data = qsp::load_calibration_csv(csv);
    const auto model = qsp::fit_qsp(data.samples, task);
    json residuals = json::array();
    for (const auto& [v, q] : qsp::speed_means(data.samples)) {
        residuals.push_back({{"speed_mps", v}, {"mean_error_mm", q}, {"residual_mm", q - qsp::predict_quality(model, v)}});
    }
    json report = {{"model", {{"task", std::string(qsp::to_string(task))}, {"a", model.a}, {"b", model.b}, {"error_metric", "max_abs_axis"}}},
                   {"residuals", residuals},
                   {"excluded_speeds", data.failed_speeds}};
    if (q_tol) {
        man.config("q_tol", *q_tol);
        report["q_tol_mm"] = *q_tol;
        report["max_speed_mps"] = qsp::max_speed_for_tolerance(model, *q_tol);
    }
    emit_json(out, report);
    man.emit(out);
    return kOk;
}

int cmd_gcode_schedule(const std::string& gcode_path, double dt, const std::string& speeds, const std::string& out) {
    Manifest man("gcode-schedule");
    man.input(gcode_path);
    man.config("dt", dt);
    man.config("speeds", speeds);
    const auto segments = gcode::parse_gcode(gcode::read_text_file(gcode_path));
    const auto timeline = gcode::build_timeline(segments);
    const auto sched = gcode::discretize_schedule(timeline, dt, gcode::parse_speed_map(speeds));
    emit_json(out, gcode::schedule_to_json(sched));
    man.emit(out);
    return kOk;
}

int cmd_partition(const std::string& map_path, const std::string& out) {
    Manifest man("partition");
    man.input(map_path);
    const auto map = zones::build_partition(geometry::load_map(map_path));
    emit_json(out, zones::partition_to_json(map));
    man.emit(out);
    return kOk;
}

struct PlanArgs {
    std::string map, schedule, x0, ref, out;
    int N{25};
    double dt{1.0};
    double u_bound{0.5};
    long k{0};
    long max_nodes{0};
    bool soft{false};
};

int cmd_plan(const PlanArgs& a) {
    Manifest man("plan");
    man.input(a.map);
    auto map = zones::build_partition(geometry::load_map(a.map));
    std::optional<gcode::SpeedSchedule> sched;
    if (!a.schedule.empty() && a.schedule != "none") {
        man.input(a.schedule);
        sched = gcode::load_schedule(a.schedule);
    }
    mpc::MpcConfig cfg;
    cfg.N = a.N;
    cfg.dt = a.dt;
    cfg.u_bound = a.u_bound;
    cfg.soft_fallback = a.soft;
    cfg.x_ref = parse_state(a.ref, "--ref");
    if (a.max_nodes > 0) cfg.bnb.max_nodes = a.max_nodes;
    const auto x0 = parse_state(a.x0, "--x0");
    if (sched && std::abs(sched->dt - cfg.dt) > 1e-12) throw InputError("schedule dt differs from --dt");
    man.config("N", cfg.N);
    man.config("dt", cfg.dt);
    man.config("u_bound", cfg.u_bound);
    man.config("x0", mpc::state_to_json(x0));
    man.config("x_ref", mpc::state_to_json(cfg.x_ref));
    man.config("k", a.k);
    man.config("max_nodes", cfg.bnb.max_nodes);
    man.config("soft_fallback", cfg.soft_fallback);
    mpc::Controller ctl(std::move(map), std::move(sched), cfg);
    const auto d = ctl.step(x0, static_cast<std::size_t>(a.k));
    emit_json(a.out, mpc::decision_to_json(d));
    man.emit(a.out);
    return kOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, const Globals& g) {
    Manifest man("simulate");
    man.input(scenario_path);
    auto s = sim::load_scenario(scenario_path);
    if (g.seed_set) s.seed = g.seed;
    man.input(s.map_path);
    if (!s.schedule_path.empty()) man.input(s.schedule_path);
    man.config("name", s.name);
    man.config("x0", mpc::state_to_json(s.x0));
    man.config("x_ref", mpc::state_to_json(s.x_ref));
    man.config("total_steps", s.total_steps);
    man.config("arrival_radius", s.arrival_radius);
    man.config("N", s.mpc.N);
    man.config("dt", s.mpc.dt);
    man.config("u_bound", s.mpc.u_bound);
    man.config("max_nodes", s.mpc.bnb.max_nodes);
    man.config("abs_gap", s.mpc.bnb.abs_gap);
    man.config("velocity_noise", s.velocity_noise);
    man.config("seed", s.seed);

    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    sim::SimResult r;
    bool aborted = false;
    try {
        r = sim::run_closed_loop(s);
    } catch (const sim::SimAborted& e) {
        r = e.partial();
        aborted = true;
    }
    {
        std::ofstream csv(dir / "trajectory.csv");
        if (!csv) throw InputError("cannot write " + (dir / "trajectory.csv").string());
        sim::write_trajectory_csv(csv, r, s.mpc.dt);
    }
    Manifest::write_json((dir / "violations.json").string(), sim::violations_to_json(r.violations));
    Manifest::write_json((dir / "manifest.json").string(), man.to_json());

    for (const auto& d : r.diagnostics) std::cerr << d << '\n';
    if (g.verbose) {
        for (std::size_t k = 0; k < r.per_step_stats.size(); ++k) {
            const auto& st = r.per_step_stats[k];
            std::cerr << "step " << k << " nodes " << st.nodes << " qp_iters " << st.qp_iters << " t " << st.wall_time << " "
                      << solver::to_string(st.status) << '\n';
        }
    }
    std::cout << sim::summary_line(r) << '\n';
    if (aborted || !r.arrival_step) {
        std::cerr << (aborted ? "controller infeasible; goal not reached\n" : "goal not reached\n");
        return kNotReached;
    }
    if (!r.violations.empty()) return kViolations;
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Speed-constrained motion planning for mobile printing robots"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MAMBOT_VERSION);
    Globals g;
    auto* seed_opt = app.add_option("--seed", g.seed, "Seed for randomized utilities");
    app.add_flag("--verbose", g.verbose, "Per-step diagnostics on stderr");

    std::string csv, task = "contour", out;
    std::optional<double> q_tol;
    auto* fit = app.add_subcommand("fit-qsp", "Fit a quality-speed model from a calibration CSV");
    fit->add_option("--csv", csv, "Calibration CSV")->required();
    fit->add_option("--task", task, "Task class: contour, infill or support");
    fit->add_option("--q-tol", q_tol, "Quality tolerance in mm; reports the admissible speed");
    fit->add_option("--out", out, "Output JSON (stdout when omitted)");

    std::string gcode_path, speeds;
    double dt = 1.0;
    auto* gs = app.add_subcommand("gcode-schedule", "Per-step speed limits from G-code");
    gs->add_option("--gcode", gcode_path, "G-code file")->required();
    gs->add_option("--dt", dt, "Controller step in s");
    gs->add_option("--speeds", speeds, "Class speeds, e.g. contour=0.3,infill=0.5,support=0.7")->required();
    gs->add_option("--out", out, "Output JSON (stdout when omitted)");

    std::string map_path;
    auto* part = app.add_subcommand("partition", "Dump the convex speed-zone partition of a map");
    part->add_option("--map", map_path, "Map JSON")->required();
    part->add_option("--out", out, "Output JSON (stdout when omitted)");

    PlanArgs pa;
    auto* plan = app.add_subcommand("plan", "Solve one receding-horizon step");
    plan->add_option("--map", pa.map, "Map JSON")->required();
    plan->add_option("--schedule", pa.schedule, "Schedule JSON or 'none'");
    plan->add_option("--x0", pa.x0, "Initial state x,y,vx,vy")->required();
    plan->add_option("--ref", pa.ref, "Reference state x,y,vx,vy")->required();
    plan->add_option("--N", pa.N, "Horizon length");
    plan->add_option("--dt", pa.dt, "Step in s");
    plan->add_option("--u-bound", pa.u_bound, "Acceleration bound per axis in m/s^2");
    plan->add_option("--k", pa.k, "Global step index into the schedule");
    plan->add_option("--max-nodes", pa.max_nodes, "Branch-and-bound node budget");
    plan->add_flag("--soft-fallback", pa.soft, "Soften constraints when the step is infeasible");
    plan->add_option("--out", pa.out, "Output JSON (stdout when omitted)");

    std::string scenario, out_dir = ".";
    auto* simc = app.add_subcommand("simulate", "Closed-loop simulation of a scenario");
    simc->add_option("--scenario", scenario, "Scenario JSON")->required();
    simc->add_option("--out-dir", out_dir, "Directory for trajectory.csv, violations.json and manifest.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }
    g.seed_set = seed_opt->count() > 0;

    try {
        if (*fit) return cmd_fit_qsp(csv, task, q_tol, out);
        if (*gs) return cmd_gcode_schedule(gcode_path, dt, speeds, out);
        if (*part) return cmd_partition(map_path, out);
        if (*plan) return cmd_plan(pa);
        if (*simc) return cmd_simulate(scenario, out_dir, g);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const mpc::MpcInfeasible& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        for (const auto& d : e.diagnostics()) std::cerr << "  " << d << '\n';
        return kNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    }
    return kInput;
}
