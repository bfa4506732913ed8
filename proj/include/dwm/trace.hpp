// Run traces and their delimited-text form.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dwm/linsys.hpp"
#include "dwm/series.hpp"

namespace dwm {

/// Statistics of one evaluated window, in the order of Trace::stat_names.
struct WindowRecord {
    std::size_t id = 0;
    std::size_t start = 0;
    /// Last step covered by the window (inclusive); also its alarm time.
    std::size_t end = 0;
    std::vector<double> values;
    bool alarm = false;

    friend bool operator==(const WindowRecord&, const WindowRecord&) = default;
};

/// Everything that happened in one closed-loop run, including the ground-truth
/// noise the detector never sees.
struct Trace {
    Series x, y, z, u, u_g, e_raw, e_shaped, w, n;
    std::vector<std::string> stat_names;
    std::vector<WindowRecord> windows;

    std::size_t size() const noexcept { return z.size(); }

    friend bool operator==(const Trace&, const Trace&) = default;
};

inline Trace make_trace(std::size_t state, std::size_t output, std::size_t input, std::size_t noise) {
    Trace t;
    t.x = Series(state);
    t.y = Series(output);
    t.z = Series(output);
    t.u = Series(input);
    t.u_g = Series(input);
    t.e_raw = Series(input);
    t.e_shaped = Series(input);
    t.w = Series(noise);
    t.n = Series(1);
    return t;
}

// ============================================================================
// Number formatting
// ============================================================================

inline void append_number(std::string& out, double value) {
    if (std::isnan(value)) {
        out += "nan";
        return;
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    out.append(buf, res.ptr);
}

inline double parse_number(std::string_view text) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw std::runtime_error("trace: cannot parse number '" + std::string(text) + "'");
    }
    return value;
}

// ============================================================================
// Export / import
// ============================================================================

namespace detail {

inline void append_series_header(std::string& out, const char* prefix, const Series& s) {
    for (std::size_t j = 0; j < s.width(); ++j) {
        out += ',';
        out += prefix;
        out += std::to_string(j);
    }
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

} // namespace detail

/// Header: t,x0..,y0..,z0..,u0..,u_g0..,e_raw0..,e_shaped0..,w0..,n,window_id,stat_<name>..,alarm
inline std::string trace_header(const Trace& trace) {
    std::string out = "t";
    detail::append_series_header(out, "x", trace.x);
    detail::append_series_header(out, "y", trace.y);
    detail::append_series_header(out, "z", trace.z);
    detail::append_series_header(out, "u", trace.u);
    detail::append_series_header(out, "u_g", trace.u_g);
    detail::append_series_header(out, "e_raw", trace.e_raw);
    detail::append_series_header(out, "e_shaped", trace.e_shaped);
    detail::append_series_header(out, "w", trace.w);
    out += ",n,window_id";
    for (const auto& name : trace.stat_names) out += ",stat_" + name;
    out += ",alarm";
    return out;
}

inline void write_trace(std::ostream& os, const Trace& trace) {
    std::vector<std::ptrdiff_t> row_window(trace.size(), -1);
    for (std::size_t k = 0; k < trace.windows.size(); ++k) {
        const auto& win = trace.windows[k];
        for (std::size_t t = win.start; t <= win.end && t < trace.size(); ++t) {
            row_window[t] = static_cast<std::ptrdiff_t>(k);
        }
    }
    os << trace_header(trace) << '\n';
    std::string line;
    const Series* columns[] = {&trace.x, &trace.y, &trace.z, &trace.u, &trace.u_g,
                               &trace.e_raw, &trace.e_shaped, &trace.w, &trace.n};
    for (std::size_t t = 0; t < trace.size(); ++t) {
        line = std::to_string(t);
        for (const Series* s : columns) {
            for (double v : s->row(t)) {
                line += ',';
                append_number(line, v);
            }
        }
        const WindowRecord* win = row_window[t] >= 0 ? &trace.windows[static_cast<std::size_t>(row_window[t])] : nullptr;
        line += ',';
        line += win ? std::to_string(win->id) : "-1";
        for (std::size_t s = 0; s < trace.stat_names.size(); ++s) {
            line += ',';
            append_number(line, win ? win->values[s] : std::numeric_limits<double>::quiet_NaN());
        }
        line += win && win->alarm ? ",1" : ",0";
        os << line << '\n';
    }
}

inline void export_trace(const Trace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace to '" + path + "'");
    write_trace(out, trace);
    if (!out) throw std::runtime_error("error while writing trace to '" + path + "'");
}

inline Trace read_trace(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("trace: missing header");
    const auto names = detail::split(header, ',');
    if (names.empty() || names.front() != "t") throw std::runtime_error("trace: header must start with 't'");

    // Column layout from the header.
    const char* prefixes[] = {"x", "y", "z", "u", "u_g", "e_raw", "e_shaped", "w"};
    std::size_t widths[8] = {};
    std::size_t col = 1;
    for (std::size_t p = 0; p < 8; ++p) {
        while (col < names.size() && names[col] == std::string(prefixes[p]) + std::to_string(widths[p])) {
            ++widths[p];
            ++col;
        }
    }
    if (col + 2 > names.size() || names[col] != "n" || names[col + 1] != "window_id") {
        throw std::runtime_error("trace: unexpected header layout");
    }
    col += 2;
    Trace trace = make_trace(widths[0], widths[1], widths[3], widths[7]);
    trace.y = Series(widths[1]);
    trace.z = Series(widths[2]);
    trace.u = Series(widths[3]);
    trace.u_g = Series(widths[4]);
    trace.e_raw = Series(widths[5]);
    trace.e_shaped = Series(widths[6]);
    while (col < names.size() && names[col].starts_with("stat_")) {
        trace.stat_names.emplace_back(names[col].substr(5));
        ++col;
    }
    if (col + 1 != names.size() || names[col] != "alarm") throw std::runtime_error("trace: header must end with 'alarm'");

    Series* columns[] = {&trace.x, &trace.y, &trace.z, &trace.u, &trace.u_g, &trace.e_raw, &trace.e_shaped, &trace.w};
    std::map<std::int64_t, std::size_t> window_index;
    std::string line;
    std::vector<double> row;
    std::size_t expected_t = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != names.size()) {
            throw std::runtime_error("trace: row " + std::to_string(expected_t) + " has the wrong number of cells");
        }
        if (parse_number(cells[0]) != static_cast<double>(expected_t)) {
            throw std::runtime_error("trace: rows must be consecutive from t = 0");
        }
        std::size_t c = 1;
        for (std::size_t p = 0; p < 8; ++p) {
            row.resize(widths[p]);
            for (std::size_t j = 0; j < widths[p]; ++j) row[j] = parse_number(cells[c++]);
            columns[p]->push_back(std::span<const double>(row));
        }
        trace.n.push_back(parse_number(cells[c++]));
        const auto id = static_cast<std::int64_t>(parse_number(cells[c++]));
        std::vector<double> values;
        for (std::size_t s = 0; s < trace.stat_names.size(); ++s) values.push_back(parse_number(cells[c++]));
        const bool alarm = cells[c] == "1";
        if (id >= 0) {
            const auto it = window_index.find(id);
            if (it == window_index.end()) {
                window_index[id] = trace.windows.size();
                trace.windows.push_back({static_cast<std::size_t>(id), expected_t, expected_t, values, alarm});
            } else {
                trace.windows[it->second].end = expected_t;
            }
        }
        ++expected_t;
    }
    return trace;
}

inline Trace import_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open trace '" + path + "'");
    return read_trace(in);
}

// ============================================================================
// Recursion self-check
// ============================================================================

/// Largest violation of the plant recursion, of y = C x + n, and of
/// u = u_g + e_shaped over the whole trace.
inline double recursion_error(const Trace& tr, const PlantModel& plant) {
    double worst = 0.0;
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b) / (1.0 + std::abs(b))); };
    const std::size_t T = tr.size();
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < tr.u.width(); ++j) track(tr.u(t, j), tr.u_g(t, j) + tr.e_shaped(t, j));
    }
    const auto ti = [](std::size_t t) { return static_cast<std::ptrdiff_t>(t); };
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            for (std::size_t t = 1; t < T; ++t) {
                if constexpr (std::is_same_v<P, ScalarPlant>) {
                    track(tr.x(t), step_scalar(p, tr.x(t - 1), tr.u(t - 1), tr.w(t)));
                } else if constexpr (std::is_same_v<P, ArxPlant>) {
                    std::vector<double> yh(p.a().size()), uh(p.b().size());
                    for (std::size_t k = 0; k < yh.size(); ++k) yh[k] = tr.y.at_or_zero(ti(t) - 1 - ti(k));
                    for (std::size_t k = 0; k < uh.size(); ++k) uh[k] = tr.u.at_or_zero(ti(t) - 1 - ti(k));
                    track(tr.y(t), step_arx(p, yh, uh, tr.w(t)));
                } else if constexpr (std::is_same_v<P, ArmaxPlant>) {
                    std::vector<double> yh(p.ar_order()), uh(p.delay() + p.input_order()), wh(p.c().size());
                    for (std::size_t k = 0; k < yh.size(); ++k) yh[k] = tr.y.at_or_zero(ti(t) - 1 - ti(k));
                    for (std::size_t k = 0; k < uh.size(); ++k) uh[k] = tr.u.at_or_zero(ti(t) - 1 - ti(k));
                    for (std::size_t k = 0; k < wh.size(); ++k) wh[k] = tr.w.at_or_zero(ti(t) - ti(k));
                    track(tr.y(t), step_armax(p, yh, uh, wh));
                } else if constexpr (std::is_same_v<P, PartialPlant>) {
                    const auto step = step_partial(p, tr.x.vec(t - 1), tr.u(t - 1), tr.w.vec(t), tr.n(t));
                    for (Eigen::Index i = 0; i < step.x_next.size(); ++i) {
                        track(tr.x(t, static_cast<std::size_t>(i)), step.x_next(i));
                    }
                    track(tr.y(t), step.y);
                } else {
                    const Eigen::VectorXd next = step_statespace(p, tr.x.vec(t - 1), tr.u.vec(t - 1), tr.w.vec(t));
                    for (Eigen::Index i = 0; i < next.size(); ++i) track(tr.x(t, static_cast<std::size_t>(i)), next(i));
                }
            }
        },
        plant);
    return worst;
}

/// Throws when the trace does not satisfy its plant's recursion.
inline void verify_trace(const Trace& trace, const PlantModel& plant, double tol = 1e-9) {
    const double err = recursion_error(trace, plant);
    if (!(err <= tol)) {
        std::ostringstream msg;
        msg << "trace does not satisfy the plant recursion (worst relative error " << err << ")";
        throw std::runtime_error(msg.str());
    }
}

} // namespace dwm
