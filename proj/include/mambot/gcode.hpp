#pragma once

// G-code analysis: toolpath segments -> task time sequence -> per-step speed limits.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mambot/errors.hpp"
#include "mambot/qsp.hpp"

namespace mambot::gcode {

using qsp::TaskClass;

struct GcodeSegment {
    Eigen::Vector3d start{Eigen::Vector3d::Zero()};  // mm
    Eigen::Vector3d end{Eigen::Vector3d::Zero()};    // mm
    double feedrate{0.0};                            // mm/min
    bool extruding{false};
    std::optional<TaskClass> task;  // empty = unclassified

    double length() const { return (end - start).norm(); }
    /// Constant-feedrate travel time in seconds.
    double duration() const { return length() / (feedrate / 60.0); }
};

struct TaskInterval {
    TaskClass task{TaskClass::Contour};
    double t_start{0.0};  // s
    double t_end{0.0};    // s
};

using ClassSpeedMap = std::map<TaskClass, double>;

struct SpeedSchedule {
    double dt{1.0};
    std::vector<double> v_max_per_step;
    ClassSpeedMap class_speed_map;

    /// Limit at global step k; steps past the end keep the final limit.
    double at(std::size_t k) const {
        if (v_max_per_step.empty()) throw InputError("empty speed schedule");
        return v_max_per_step[std::min(k, v_max_per_step.size() - 1)];
    }
};

/// Slicer feature names -> task class. Matching ignores case.
class TypeMapping {
public:
    static TypeMapping defaults() {
        TypeMapping m;
        for (const char* n : {"WALL-OUTER", "External perimeter", "Perimeter"}) m.set(n, TaskClass::Contour);
        for (const char* n : {"FILL", "Infill", "Solid infill", "Top solid infill"}) m.set(n, TaskClass::Infill);
        for (const char* n : {"SUPPORT", "Support material"}) m.set(n, TaskClass::Support);
        return m;
    }

    void set(std::string_view name, TaskClass task) { table_[qsp::lowercase(name)] = task; }

    std::optional<TaskClass> lookup(std::string_view name) const {
        const auto it = table_.find(qsp::lowercase(name));
        if (it == table_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::map<std::string, TaskClass> table_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// ";TYPE:FILL" and "; TYPE: External perimeter" both yield the feature name.
inline std::optional<std::string_view> type_comment(std::string_view comment) {
    comment = trim(comment);
    if (comment.size() < 5) return std::nullopt;
    if (qsp::lowercase(comment.substr(0, 4)) != "type") return std::nullopt;
    comment.remove_prefix(4);
    comment = trim(comment);
    if (comment.empty() || comment.front() != ':') return std::nullopt;
    comment.remove_prefix(1);
    return trim(comment);
}

struct Word {
    char letter;
    double value;
};

inline std::vector<Word> split_words(std::string_view code, std::size_t lineno) {
    std::vector<Word> words;
    std::size_t i = 0;
    while (i < code.size()) {
        if (std::isspace(static_cast<unsigned char>(code[i]))) {
            ++i;
            continue;
        }
        const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(code[i])));
        if (!std::isalpha(static_cast<unsigned char>(letter))) {
            throw ParseError(lineno, std::string("unexpected character '") + code[i] + "'");
        }
        std::size_t j = i + 1;
        while (j < code.size() && !std::isspace(static_cast<unsigned char>(code[j])) &&
               !std::isalpha(static_cast<unsigned char>(code[j]))) {
            ++j;
        }
        std::string_view num = code.substr(i + 1, j - i - 1);
        if (!num.empty() && num.front() == '+') num.remove_prefix(1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
        if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size() || !std::isfinite(v)) {
            throw ParseError(lineno, "malformed word '" + std::string(code.substr(i, j - i)) + "'");
        }
        words.push_back({letter, v});
        i = j;
    }
    return words;
}

}  // namespace detail

/// Parses G0/G1 moves into linear segments.
///
/// Feedrate is modal. XYZ are absolute unless G91 is active; E mode follows
/// M82/M83 (absolute by default). G92 resets positions. A move is extruding
/// when it advances E. Commands other than G0/G1/G90/G91/G92/M82/M83 are skipped.
inline std::vector<GcodeSegment> parse_gcode(std::string_view text, const TypeMapping& mapping = TypeMapping::defaults()) {
    std::vector<GcodeSegment> segments;
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    double e = 0.0;
    double feed = 0.0;
    bool relative_xyz = false;
    bool relative_e = false;
    std::optional<TaskClass> task;

    std::size_t lineno = 0;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(begin, end - begin);
        begin = end + 1;
        ++lineno;

        std::string_view code = line;
        const std::size_t semi = line.find(';');
        if (semi != std::string_view::npos) {
            code = line.substr(0, semi);
            if (const auto name = detail::type_comment(line.substr(semi + 1))) task = mapping.lookup(*name);
        }
        code = detail::trim(code);
        if (code.empty()) {
            if (end == text.size()) break;
            continue;
        }
        // Leading line numbers (N123) are tolerated.
        std::size_t cmd_start = 0;
        if (std::toupper(static_cast<unsigned char>(code[0])) == 'N') {
            cmd_start = code.find_first_of(" \t");
            code = cmd_start == std::string_view::npos ? std::string_view{} : detail::trim(code.substr(cmd_start));
            if (code.empty()) continue;
        }
        std::size_t cmd_end = 1;
        while (cmd_end < code.size() && (std::isdigit(static_cast<unsigned char>(code[cmd_end])) || code[cmd_end] == '.')) {
            ++cmd_end;
        }
        const std::string cmd = qsp::lowercase(code.substr(0, cmd_end));
        const std::string_view rest = code.substr(cmd_end);

        if (cmd == "g90") {
            relative_xyz = false;
        } else if (cmd == "g91") {
            relative_xyz = true;
        } else if (cmd == "m82") {
            relative_e = false;
        } else if (cmd == "m83") {
            relative_e = true;
        } else if (cmd == "g92") {
            for (const auto& w : detail::split_words(rest, lineno)) {
                switch (w.letter) {
                    case 'X': pos.x() = w.value; break;
                    case 'Y': pos.y() = w.value; break;
                    case 'Z': pos.z() = w.value; break;
                    case 'E': e = w.value; break;
                    default: break;
                }
            }
        } else if (cmd == "g0" || cmd == "g1" || cmd == "g00" || cmd == "g01") {
            Eigen::Vector3d target = pos;
            double de = 0.0;
            for (const auto& w : detail::split_words(rest, lineno)) {
                switch (w.letter) {
                    case 'X': target.x() = relative_xyz ? pos.x() + w.value : w.value; break;
                    case 'Y': target.y() = relative_xyz ? pos.y() + w.value : w.value; break;
                    case 'Z': target.z() = relative_xyz ? pos.z() + w.value : w.value; break;
                    case 'E':
                        de = relative_e ? w.value : w.value - e;
                        e = relative_e ? e + w.value : w.value;
                        break;
                    case 'F':
                        if (!(w.value > 0.0)) throw ParseError(lineno, "feedrate must be positive");
                        feed = w.value;
                        break;
                    default: break;
                }
            }
            if ((target - pos).norm() > 0.0) {
                if (!(feed > 0.0)) throw ParseError(lineno, "move before any feedrate was set");
                GcodeSegment s;
                s.start = pos;
                s.end = target;
                s.feedrate = feed;
                s.extruding = de > 0.0;
                s.task = task;
                segments.push_back(s);
            }
            pos = target;
        }
        if (end == text.size()) break;
    }
    return segments;
}

/// Task time sequence at constant feedrate.
///
/// Unclassified extrusion counts as contour. Travel moves take the class of
/// the next extruding move (the last one when none follows). Consecutive
/// moves of one class merge into a single interval.
inline std::vector<TaskInterval> build_timeline(std::span<const GcodeSegment> segments) {
    std::vector<std::optional<TaskClass>> ahead(segments.size());
    std::optional<TaskClass> next;
    for (std::size_t i = segments.size(); i-- > 0;) {
        if (segments[i].extruding) next = segments[i].task.value_or(TaskClass::Contour);
        ahead[i] = next;
    }
    std::vector<TaskClass> cls(segments.size(), TaskClass::Contour);
    std::optional<TaskClass> prev;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].extruding) prev = ahead[i];
        cls[i] = ahead[i] ? *ahead[i] : prev.value_or(TaskClass::Contour);
    }

    std::vector<TaskInterval> timeline;
    double t = 0.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const double d = segments[i].duration();
        if (!timeline.empty() && timeline.back().task == cls[i]) {
            timeline.back().t_end = t + d;
        } else {
            timeline.push_back({cls[i], t, t + d});
        }
        t += d;
    }
    return timeline;
}

/// Per-step limits: each step [k dt, (k+1) dt) takes the smallest class speed among
/// the intervals it overlaps.
inline SpeedSchedule discretize_schedule(std::span<const TaskInterval> timeline, double dt, const ClassSpeedMap& speeds,
                                         double v_hardware_max = qsp::kHardwareMaxSpeed) {
    if (!(dt > 0.0)) throw InputError("discretize_schedule: dt must be positive");
    if (timeline.empty()) throw InputError("discretize_schedule: empty timeline, no schedule derivable");
    for (const auto& [task, v] : speeds) {
        if (!(v > 0.0) || v > v_hardware_max) {
            throw InputError("class speed for " + std::string(qsp::to_string(task)) + " must lie in (0, " +
                             std::to_string(v_hardware_max) + "]");
        }
    }
    for (std::size_t i = 0; i < timeline.size(); ++i) {
        const auto& iv = timeline[i];
        if (!(iv.t_start < iv.t_end)) throw InputError("timeline interval with t_start >= t_end");
        if (i > 0 && iv.t_start < timeline[i - 1].t_end - 1e-9) throw InputError("timeline intervals overlap or are unsorted");
        if (!speeds.contains(iv.task)) {
            throw InputError("no speed given for task class " + std::string(qsp::to_string(iv.task)));
        }
    }
    const double horizon = timeline.back().t_end;
    const double eps = 1e-9 * dt;
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(horizon / dt - 1e-9)));

    SpeedSchedule s;
    s.dt = dt;
    s.class_speed_map = speeds;
    s.v_max_per_step.assign(steps, v_hardware_max);
    for (std::size_t k = 0; k < steps; ++k) {
        const double lo = static_cast<double>(k) * dt;
        const double hi = lo + dt;
        double v = v_hardware_max;
        for (const auto& iv : timeline) {
            if (iv.t_start < hi - eps && iv.t_end > lo + eps) v = std::min(v, speeds.at(iv.task));
        }
        s.v_max_per_step[k] = v;
    }
    return s;
}

/// "contour=0.3,infill=0.5,support=0.7"
inline ClassSpeedMap parse_speed_map(std::string_view text) {
    ClassSpeedMap out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string_view::npos) comma = text.size();
        const std::string_view item = detail::trim(text.substr(start, comma - start));
        start = comma + 1;
        if (item.empty()) {
            if (comma == text.size()) break;
            continue;
        }
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) throw InputError("speed map item '" + std::string(item) + "' lacks '='");
        const TaskClass t = qsp::task_from_string(detail::trim(item.substr(0, eq)));
        std::string_view num = detail::trim(item.substr(eq + 1));
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
        if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size()) {
            throw InputError("speed map item '" + std::string(item) + "' has a malformed number");
        }
        out[t] = v;
        if (comma == text.size()) break;
    }
    return out;
}

inline nlohmann::json schedule_to_json(const SpeedSchedule& s) {
    nlohmann::json speeds = nlohmann::json::object();
    for (const auto& [task, v] : s.class_speed_map) speeds[std::string(qsp::to_string(task))] = v;
    return {{"dt", s.dt}, {"class_speed_map", speeds}, {"v_max_per_step", s.v_max_per_step}};
}

inline SpeedSchedule schedule_from_json(const nlohmann::json& j) {
    try {
        SpeedSchedule s;
        s.dt = j.at("dt").get<double>();
        if (j.contains("class_speed_map")) {
            for (const auto& [name, v] : j.at("class_speed_map").items()) {
                s.class_speed_map[qsp::task_from_string(name)] = v.get<double>();
            }
        }
        s.v_max_per_step = j.at("v_max_per_step").get<std::vector<double>>();
        if (!(s.dt > 0.0)) throw InputError("schedule dt must be positive");
        if (s.v_max_per_step.empty()) throw InputError("schedule has no steps");
        for (double v : s.v_max_per_step) {
            if (!(v > 0.0) || v > qsp::kHardwareMaxSpeed) throw InputError("schedule entry outside (0, 1] m/s");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid schedule JSON: ") + e.what());
    }
}

inline SpeedSchedule load_schedule(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open schedule file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("invalid JSON in schedule file " + path + ": " + e.what());
    }
    return schedule_from_json(j);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mambot::gcode
