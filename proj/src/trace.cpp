#include "simvar/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

// Trace file format (#simvar-trace v1):
//   line 1: #simvar-trace v1
//   line 2: #meta key=value;key=value;...   (run_id, scenario_id, seed,
//           dt_physics, log_interval first, then extra metadata sorted by key)
//   rows:   t,actor_id,x,y,z,event          event in {none, collision:<id>, destroyed}
// UTF-8, \n line endings, '.' decimal separator. Floats are serialized as the
// shortest decimal that round-trips, so parse(write(x)) is bit-identical.

namespace simvar {

namespace {

constexpr std::string_view kVersionLine = "#simvar-trace v1";

bool valid_id(std::string_view s) {
    if (s.empty() || s[0] == '#') return false;
    for (char c : s) {
        if (c == ',' || c == ';' || c == '=' || c == '\n' || c == '\r') return false;
    }
    return true;
}

bool valid_meta_text(std::string_view s) {
    for (char c : s) {
        if (c == ';' || c == '=' || c == '\n' || c == '\r') return false;
    }
    return true;
}

[[noreturn]] void row_error(std::size_t row, const std::string& what) {
    throw TraceError(what + " at row " + std::to_string(row));
}

// Tick index of a sample time on the logging grid; tolerant of the rounding
// in t = i * log_interval.
long long tick_of(double t, double log_interval, std::size_t row) {
    const double q = t / log_interval;
    const double r = std::round(q);
    if (std::abs(q - r) > 1e-6 * std::max(1.0, std::abs(q))) {
        row_error(row, "time " + format_double(t) + " is not a multiple of log_interval");
    }
    return static_cast<long long>(r);
}

std::string format_event(const Event& e) {
    switch (e.kind) {
        case EventKind::none: return "none";
        case EventKind::collision: return "collision:" + e.other;
        case EventKind::destroyed: return "destroyed";
    }
    return "none";
}

Event parse_event(std::string_view s, std::size_t row) {
    if (s == "none") return Event::none();
    if (s == "destroyed") return Event::destroyed();
    if (s.rfind("collision:", 0) == 0) {
        std::string other(s.substr(10));
        if (!valid_id(other)) row_error(row, "malformed collision event '" + std::string(s) + "'");
        return Event::collision(std::move(other));
    }
    row_error(row, "unknown event '" + std::string(s) + "'");
}

std::vector<std::string_view> split(std::string_view line, char sep) {
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

}  // namespace

bool is_finite(const Position& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw TraceError("malformed number '" + std::string(s) + "'");
    }
    return v;
}

std::string trace_body_bytes(const RunTrace& trace) {
    std::string out(kVersionLine);
    out.push_back('\n');
    for (const TraceSample& s : trace.samples) {
        out += format_double(s.t);
        out.push_back(',');
        out += s.actor_id;
        out.push_back(',');
        out += format_double(s.position.x);
        out.push_back(',');
        out += format_double(s.position.y);
        out.push_back(',');
        out += format_double(s.position.z);
        out.push_back(',');
        out += format_event(s.event);
        out.push_back('\n');
    }
    return out;
}

void write_trace(const RunTrace& trace, std::ostream& out) {
    validate_trace(trace);

    std::string meta = "#meta run_id=" + trace.run_id;
    meta += ";scenario_id=" + trace.scenario_id;
    meta += ";seed=" + std::to_string(trace.seed);
    meta += ";dt_physics=" + format_double(trace.dt_physics);
    meta += ";log_interval=" + format_double(trace.log_interval);
    for (const auto& [k, v] : trace.metadata) {  // std::map: sorted by key
        if (!valid_meta_text(k) || !valid_meta_text(v)) {
            throw TraceError("metadata key/value contains reserved character: " + k);
        }
        meta += ";" + k + "=" + v;
    }

    const std::string body = trace_body_bytes(trace);
    const std::size_t nl = body.find('\n');
    out.write(body.data(), static_cast<std::streamsize>(nl + 1));
    out << meta << '\n';
    out.write(body.data() + nl + 1, static_cast<std::streamsize>(body.size() - nl - 1));
    if (!out) throw TraceError("trace write failed");
}

std::string write_trace_string(const RunTrace& trace) {
    std::ostringstream os;
    write_trace(trace, os);
    return os.str();
}

void write_trace_file(const RunTrace& trace, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw TraceError("cannot open trace file for writing: " + path);
    write_trace(trace, f);
    f.flush();
    if (!f) throw TraceError("trace write failed: " + path);
}

RunTrace parse_trace(std::istream& in) {
    RunTrace trace;
    std::string line;
    std::size_t row = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++row;
        return true;
    };

    if (!next_line() || line != kVersionLine) {
        throw TraceError("missing or unsupported version line (expected '" +
                         std::string(kVersionLine) + "')");
    }
    if (!next_line() || line.rfind("#meta ", 0) != 0) {
        throw TraceError("missing #meta line");
    }
    bool have_core[5] = {};
    for (std::string_view field : split(std::string_view(line).substr(6), ';')) {
        const std::size_t eq = field.find('=');
        if (eq == std::string_view::npos) row_error(row, "malformed meta field '" + std::string(field) + "'");
        const std::string key(field.substr(0, eq));
        const std::string value(field.substr(eq + 1));
        if (key == "run_id") {
            trace.run_id = value;
            have_core[0] = true;
        } else if (key == "scenario_id") {
            trace.scenario_id = value;
            have_core[1] = true;
        } else if (key == "seed") {
            trace.seed = std::stoull(value);
            have_core[2] = true;
        } else if (key == "dt_physics") {
            trace.dt_physics = parse_double(value);
            have_core[3] = true;
        } else if (key == "log_interval") {
            trace.log_interval = parse_double(value);
            have_core[4] = true;
        } else {
            trace.metadata[key] = value;
        }
    }
    if (!(have_core[0] && have_core[1] && have_core[2] && have_core[3] && have_core[4])) {
        throw TraceError("#meta line missing a required key");
    }

    while (next_line()) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 6) row_error(row, "malformed row (expected 6 fields)");
        TraceSample s;
        try {
            s.t = parse_double(fields[0]);
            s.position.x = parse_double(fields[2]);
            s.position.y = parse_double(fields[3]);
            s.position.z = parse_double(fields[4]);
        } catch (const TraceError& e) {
            row_error(row, std::string("malformed row: ") + e.what());
        }
        s.actor_id = std::string(fields[1]);
        if (!valid_id(s.actor_id)) row_error(row, "malformed actor id '" + s.actor_id + "'");
        s.event = parse_event(fields[5], row);

        if (!trace.samples.empty()) {
            const TraceSample& prev = trace.samples.back();
            if (s.t < prev.t) row_error(row, "non-monotone time");
            if (s.t == prev.t) {
                if (s.actor_id == prev.actor_id) row_error(row, "duplicate (t, actor_id)");
                if (s.actor_id < prev.actor_id) row_error(row, "rows not sorted by (t, actor_id)");
            }
        }
        trace.samples.push_back(std::move(s));
    }

    validate_trace(trace);
    return trace;
}

RunTrace parse_trace_string(const std::string& text) {
    std::istringstream is(text);
    return parse_trace(is);
}

RunTrace parse_trace_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw TraceError("cannot open trace file: " + path);
    try {
        return parse_trace(f);
    } catch (const TraceError& e) {
        throw TraceError(path + ": " + e.what());
    }
}

void validate_trace(const RunTrace& trace) {
    if (trace.dt_physics <= 0.0) throw TraceError("dt_physics must be positive");
    if (trace.log_interval <= 0.0) throw TraceError("log_interval must be positive");
    const double steps = trace.log_interval / trace.dt_physics;
    if (std::abs(steps - std::round(steps)) > 1e-9 || std::round(steps) < 1.0) {
        throw TraceError("log_interval must be a positive integer multiple of dt_physics");
    }

    // Per-actor bookkeeping for contiguity and destruction.
    struct ActorState {
        long long last_tick = 0;
        bool destroyed = false;
    };
    std::map<std::string, ActorState> actors;

    std::size_t row = 2;  // rows start after the two header lines
    const TraceSample* prev = nullptr;
    for (const TraceSample& s : trace.samples) {
        ++row;
        if (s.t < 0.0 || !std::isfinite(s.t)) row_error(row, "negative or non-finite time");
        if (!is_finite(s.position)) row_error(row, "non-finite position");
        if (!valid_id(s.actor_id)) row_error(row, "malformed actor id '" + s.actor_id + "'");
        if (s.event.kind == EventKind::collision && !valid_id(s.event.other)) {
            row_error(row, "collision event with malformed actor id");
        }
        if (prev) {
            if (s.t < prev->t) row_error(row, "non-monotone time");
            if (s.t == prev->t && s.actor_id <= prev->actor_id) {
                row_error(row, s.actor_id == prev->actor_id ? "duplicate (t, actor_id)"
                                                            : "rows not sorted by (t, actor_id)");
            }
        }
        const long long tick = tick_of(s.t, trace.log_interval, row);
        auto it = actors.find(s.actor_id);
        if (it == actors.end()) {
            actors.emplace(s.actor_id, ActorState{tick, s.event.kind == EventKind::destroyed});
        } else {
            if (it->second.destroyed) row_error(row, "sample after destruction of " + s.actor_id);
            if (tick != it->second.last_tick + 1) {
                row_error(row, "non-contiguous samples for " + s.actor_id);
            }
            it->second.last_tick = tick;
            it->second.destroyed = s.event.kind == EventKind::destroyed;
        }
        prev = &s;
    }
}

void validate_run_set(const RunSet& rs) {
    if (rs.runs.size() < 2) throw TraceError("run set needs n >= 2 for variance analysis");
    const RunTrace& first = rs.runs.front();
    for (const RunTrace& r : rs.runs) {
        if (r.scenario_id != first.scenario_id || r.dt_physics != first.dt_physics ||
            r.log_interval != first.log_interval) {
            throw TraceError("runs in a set must share scenario_id, dt_physics and log_interval");
        }
    }
}

AlignedSeries align(const RunSet& rs, const std::string& actor_id) {
    validate_run_set(rs);

    // Sample times are exact multiples of the shared log_interval and are
    // produced identically across runs, so exact-double keys are safe.
    std::map<double, std::vector<Position>> by_time;
    bool seen = false;
    for (const RunTrace& run : rs.runs) {
        for (const TraceSample& s : run.samples) {
            if (s.actor_id != actor_id) continue;
            seen = true;
            by_time[s.t].push_back(s.position);
        }
    }
    if (!seen) throw TraceError("actor '" + actor_id + "' absent from every run");

    AlignedSeries series;
    series.actor_id = actor_id;
    series.entries.reserve(by_time.size());
    for (auto& [t, positions] : by_time) {
        series.entries.push_back(AlignedEntry{t, std::move(positions)});
    }
    return series;
}

std::vector<std::string> actor_ids(const RunSet& rs) {
    std::set<std::string> ids;
    for (const RunTrace& run : rs.runs) {
        for (const TraceSample& s : run.samples) ids.insert(s.actor_id);
    }
    return std::vector<std::string>(ids.begin(), ids.end());
}

}  // namespace simvar
