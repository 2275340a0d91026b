#pragma once

// Quality-speed profiles: per task class, a linear model q(v) = a v + b that
// maps mobile-base speed (m/s) to predicted dimensional print error (mm).

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

namespace mambot::qsp {

/// Fastest base speed the platform is driven at (m/s).
inline constexpr double kHardwareMaxSpeed = 1.0;

/// Print task classes, ordered by decreasing quality demand.
enum class TaskClass { Contour = 0, Infill = 1, Support = 2 };

inline constexpr TaskClass kAllTasks[] = {TaskClass::Contour, TaskClass::Infill, TaskClass::Support};

inline std::string_view to_string(TaskClass t) {
    switch (t) {
        case TaskClass::Contour: return "contour";
        case TaskClass::Infill: return "infill";
        case TaskClass::Support: return "support";
    }
    return "?";
}

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

inline TaskClass task_from_string(std::string_view name) {
    const std::string n = lowercase(name);
    if (n == "contour") return TaskClass::Contour;
    if (n == "infill") return TaskClass::Infill;
    if (n == "support") return TaskClass::Support;
    throw InputError("unknown task class '" + std::string(name) + "' (expected contour, infill or support)");
}

/// Default quality tolerance (mm). Only contour work has a published success criterion.
inline std::optional<double> default_tolerance(TaskClass t) {
    if (t == TaskClass::Contour) return 0.05;
    return std::nullopt;
}

/// One printed part: signed deviations from nominal dimensions at a fixed base speed.
struct CalibrationSample {
    double speed{0.0};       // m/s
    double height_err{0.0};  // mm
    double width_err{0.0};   // mm
    double depth_err{0.0};   // mm

    void validate() const {
        if (!std::isfinite(speed) || speed < 0.0) throw InputError("calibration sample: speed must be >= 0");
        for (double e : {height_err, width_err, depth_err}) {
            if (!std::isfinite(e) || std::abs(e) >= 10.0) {
                throw InputError("calibration sample: error outside the +-10 mm sanity bound");
            }
        }
    }
};

enum class ErrorMetric { MaxAbsAxis };

struct QspModel {
    double a{0.0};  // mm per (m/s)
    double b{0.0};  // mm
    TaskClass task{TaskClass::Contour};
    ErrorMetric error_metric{ErrorMetric::MaxAbsAxis};
};

/// Largest absolute deviation across the three axes.
inline double scalarize(const CalibrationSample& s) {
    return std::max({std::abs(s.height_err), std::abs(s.width_err), std::abs(s.depth_err)});
}

/// (speed, mean scalarized error) per distinct speed, sorted by speed.
inline std::vector<std::pair<double, double>> speed_means(std::span<const CalibrationSample> samples) {
    std::map<double, std::pair<double, int>> acc;
    for (const auto& s : samples) {
        s.validate();
        auto& slot = acc[s.speed];
        slot.first += scalarize(s);
        slot.second += 1;
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(acc.size());
    for (const auto& [v, sum] : acc) out.emplace_back(v, sum.first / sum.second);
    return out;
}

/// Ordinary least squares on per-speed means; replicates at one speed count once.
inline QspModel fit_qsp(std::span<const CalibrationSample> samples, TaskClass task) {
    const auto pts = speed_means(samples);
    if (pts.size() < 2) throw NumericalError("singular fit: need samples at two or more distinct speeds");
    double mv = 0.0, mq = 0.0;
    for (const auto& [v, q] : pts) {
        mv += v;
        mq += q;
    }
    const double n = static_cast<double>(pts.size());
    mv /= n;
    mq /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [v, q] : pts) {
        sxx += (v - mv) * (v - mv);
        sxy += (v - mv) * (q - mq);
    }
    if (!(sxx > 0.0)) throw NumericalError("singular fit: all speeds identical");
    QspModel m;
    m.a = sxy / sxx;
    m.b = mq - m.a * mv;
    m.task = task;
    return m;
}

inline double predict_quality(const QspModel& m, double v) {
    if (!(v >= 0.0)) throw InputError("predict_quality: speed must be >= 0");
    return m.a * v + m.b;
}

/// Largest speed whose predicted error stays within q_tol, clamped to [0, v_hardware_max].
inline double max_speed_for_tolerance(const QspModel& m, double q_tol, double v_hardware_max = kHardwareMaxSpeed) {
    if (!(m.a > 0.0)) throw NumericalError("max_speed_for_tolerance: model slope must be positive");
    if (q_tol < m.b) {
        throw NumericalError("tolerance unachievable: " + std::to_string(q_tol) + " mm is below the zero-speed error " +
                             std::to_string(m.b) + " mm");
    }
    return std::clamp((q_tol - m.b) / m.a, 0.0, v_hardware_max);
}

struct CalibrationData {
    std::vector<CalibrationSample> samples;
    std::vector<double> failed_speeds;  // rows recorded as Fail / N/A, excluded from fits
};

inline constexpr std::string_view kCalibrationHeader = "speed_mps,height_err_mm,width_err_mm,depth_err_mm";

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace detail

/// Parses `speed_mps,height_err_mm,width_err_mm,depth_err_mm` CSV. Lines starting
/// with '#' are comments. Rows whose three error fields are all non-numeric
/// (e.g. "Fail") are recorded in failed_speeds.
inline CalibrationData parse_calibration_csv(std::string_view text) {
    CalibrationData data;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (!header_seen) {
            std::string compact;
            for (char c : t) {
                if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
            }
            if (compact != kCalibrationHeader) {
                throw ParseError(lineno, "expected header '" + std::string(kCalibrationHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = t.find(',', start);
            fields.push_back(t.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 4) throw ParseError(lineno, "expected 4 fields");
        const auto speed = detail::to_double(fields[0]);
        if (!speed) throw ParseError(lineno, "speed is not a number");
        const auto h = detail::to_double(fields[1]);
        const auto w = detail::to_double(fields[2]);
        const auto d = detail::to_double(fields[3]);
        if (!h && !w && !d) {
            data.failed_speeds.push_back(*speed);
            continue;
        }
        if (!h || !w || !d) throw ParseError(lineno, "error fields must all be numbers");
        CalibrationSample s{*speed, *h, *w, *d};
        try {
            s.validate();
        } catch (const InputError& e) {
            throw ParseError(lineno, e.what());
        }
        data.samples.push_back(s);
    }
    if (!header_seen) throw ParseError(lineno, "missing header");
    return data;
}

inline CalibrationData load_calibration_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open calibration file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_calibration_csv(ss.str());
}

}  // namespace mambot::qsp
