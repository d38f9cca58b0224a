#include "simvar/scenario_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

#include "simvar/trace.hpp"

// Scenario file grammar (#simvar-scenario v1):
//   line 1:  #simvar-scenario v1
//   body:    key = value            scalars; tuples are space-separated
//            name { ... }           nested block
//   blocks:  navmesh { cell_size, blocked_rect (repeatable) }
//            actor   { id, kind, start, cruise_speed, radius,
//                      waypoint (repeatable) or goal, avoidance_range }
//            injectors { sum_order_shuffle, timestep_jitter,
//                        timestep_jitter_probability, astar_random_tiebreak,
//                        collision_impulse_jitter, entropy_seed }
//   '#' starts a comment; blank lines are ignored.

namespace simvar::minisim {

namespace {

constexpr std::string_view kVersionLine = "#simvar-scenario v1";

struct Line {
    std::size_t number = 0;
    std::string key;
    std::string value;     // empty for block open/close
    bool block_open = false;
    bool block_close = false;
};

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    throw ScenarioError("scenario line " + std::to_string(line) + ": " + what);
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const Line& ln, std::size_t expect) {
    std::vector<double> out;
    std::istringstream is(ln.value);
    std::string tok;
    while (is >> tok) {
        try {
            out.push_back(parse_double(tok));
        } catch (const TraceError&) {
            fail(ln.number, "expected a number, got '" + tok + "'");
        }
    }
    if (expect != 0 && out.size() != expect) {
        fail(ln.number, "expected " + std::to_string(expect) + " numbers");
    }
    return out;
}

double parse_number(const Line& ln) { return parse_numbers(ln, 1)[0]; }

bool parse_bool(const Line& ln) {
    if (ln.value == "true" || ln.value == "1") return true;
    if (ln.value == "false" || ln.value == "0") return false;
    fail(ln.number, "expected true/false");
}

class LineReader {
  public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::optional<Line> next() {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++number_;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            const auto hash = raw.find('#');
            std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (text.empty()) continue;
            Line ln;
            ln.number = number_;
            if (text == "}") {
                ln.block_close = true;
                return ln;
            }
            if (text.back() == '{') {
                ln.block_open = true;
                ln.key = trim(text.substr(0, text.size() - 1));
                if (ln.key.empty()) fail(number_, "unnamed block");
                return ln;
            }
            const auto eq = text.find('=');
            if (eq == std::string::npos) fail(number_, "expected 'key = value'");
            ln.key = trim(text.substr(0, eq));
            ln.value = trim(text.substr(eq + 1));
            if (ln.key.empty()) fail(number_, "empty key");
            return ln;
        }
        return std::nullopt;
    }

    std::size_t line_number() const { return number_; }

  private:
    std::istream& in_;
    std::size_t number_ = 1;  // the version line was consumed before construction
};

void skip_block(LineReader& reader) {
    while (auto ln = reader.next()) {
        if (ln->block_close) return;
        if (ln->block_open) skip_block(reader);
    }
    throw ScenarioError("unterminated block at end of scenario file");
}

struct NavMeshConfig {
    double cell_size = 1.0;
    std::vector<std::array<int, 4>> blocked_rects;
};

NavMeshConfig parse_navmesh_block(LineReader& reader) {
    NavMeshConfig cfg;
    while (auto ln = reader.next()) {
        if (ln->block_close) return cfg;
        if (ln->block_open) fail(ln->number, "unexpected block inside navmesh");
        if (ln->key == "cell_size") {
            cfg.cell_size = parse_number(*ln);
        } else if (ln->key == "blocked_rect") {
            const auto v = parse_numbers(*ln, 4);
            cfg.blocked_rects.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]),
                                         static_cast<int>(v[2]), static_cast<int>(v[3])});
        } else {
            fail(ln->number, "unknown navmesh key '" + ln->key + "'");
        }
    }
    throw ScenarioError("unterminated navmesh block");
}

ActorSpec parse_actor_block(LineReader& reader) {
    ActorSpec a;
    std::vector<Position> waypoints;
    while (auto ln = reader.next()) {
        if (ln->block_close) {
            a.waypoints = std::move(waypoints);
            return a;
        }
        if (ln->block_open) fail(ln->number, "unexpected block inside actor");
        if (ln->key == "id") {
            a.actor_id = ln->value;
        } else if (ln->key == "kind") {
            if (ln->value == "vehicle") {
                a.kind = ActorKind::vehicle;
            } else if (ln->value == "pedestrian") {
                a.kind = ActorKind::pedestrian;
            } else {
                fail(ln->number, "unknown actor kind '" + ln->value + "'");
            }
        } else if (ln->key == "start") {
            const auto v = parse_numbers(*ln, 2);
            a.start = Position{v[0], v[1], 0.0};
        } else if (ln->key == "goal") {
            const auto v = parse_numbers(*ln, 2);
            a.goal = Position{v[0], v[1], 0.0};
        } else if (ln->key == "waypoint") {
            const auto v = parse_numbers(*ln, 2);
            waypoints.push_back(Position{v[0], v[1], 0.0});
        } else if (ln->key == "cruise_speed") {
            a.cruise_speed = parse_number(*ln);
        } else if (ln->key == "radius") {
            a.radius = parse_number(*ln);
        } else if (ln->key == "avoidance_range") {
            a.avoidance_range = parse_number(*ln);
        } else {
            fail(ln->number, "unknown actor key '" + ln->key + "'");
        }
    }
    throw ScenarioError("unterminated actor block");
}

InjectorConfig parse_injectors_block(LineReader& reader) {
    InjectorConfig inj;
    while (auto ln = reader.next()) {
        if (ln->block_close) return inj;
        if (ln->block_open) fail(ln->number, "unexpected block inside injectors");
        if (ln->key == "sum_order_shuffle") {
            inj.sum_order_shuffle = parse_bool(*ln);
        } else if (ln->key == "timestep_jitter") {
            inj.timestep_jitter = parse_bool(*ln);
        } else if (ln->key == "timestep_jitter_probability") {
            inj.timestep_jitter_probability = parse_number(*ln);
        } else if (ln->key == "astar_random_tiebreak") {
            inj.astar_random_tiebreak = parse_bool(*ln);
        } else if (ln->key == "collision_impulse_jitter") {
            inj.collision_impulse_jitter = parse_number(*ln);
        } else if (ln->key == "entropy_seed") {
            inj.entropy_seed = std::stoull(ln->value);
        } else {
            fail(ln->number, "unknown injector key '" + ln->key + "'");
        }
    }
    throw ScenarioError("unterminated injectors block");
}

}  // namespace

ScenarioSpec parse_scenario(std::istream& in) {
    std::string first;
    if (!std::getline(in, first)) throw ScenarioError("empty scenario file");
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (trim(first) != kVersionLine) {
        throw ScenarioError("missing or unsupported version line (expected '" +
                            std::string(kVersionLine) + "')");
    }

    ScenarioSpec spec;
    NavMeshConfig mesh_cfg;
    bool have_mesh = false;

    LineReader reader(in);
    while (auto ln = reader.next()) {
        if (ln->block_close) fail(ln->number, "unmatched '}'");
        if (ln->block_open) {
            if (ln->key == "navmesh") {
                mesh_cfg = parse_navmesh_block(reader);
                have_mesh = true;
            } else if (ln->key == "actor") {
                spec.actors.push_back(parse_actor_block(reader));
            } else if (ln->key == "injectors") {
                spec.injectors = parse_injectors_block(reader);
            } else {
                fail(ln->number, "unknown block '" + ln->key + "'");
            }
            continue;
        }
        if (ln->key == "scenario_id") {
            spec.scenario_id = ln->value;
        } else if (ln->key == "map_bounds") {
            const auto v = parse_numbers(*ln, 2);
            spec.map_w = v[0];
            spec.map_h = v[1];
        } else if (ln->key == "dt_physics") {
            spec.dt_physics = parse_number(*ln);
        } else if (ln->key == "log_interval") {
            spec.log_interval = parse_number(*ln);
        } else if (ln->key == "max_sim_time") {
            spec.max_sim_time = parse_number(*ln);
        } else if (ln->key == "stop_on_collision") {
            spec.stop_on_collision = parse_bool(*ln);
        } else {
            fail(ln->number, "unknown key '" + ln->key + "'");
        }
    }

    const double cell = have_mesh ? mesh_cfg.cell_size : 1.0;
    if (cell <= 0.0) throw ScenarioError("navmesh cell_size must be positive");
    const int w = std::max(1, static_cast<int>(std::ceil(spec.map_w / cell)));
    const int h = std::max(1, static_cast<int>(std::ceil(spec.map_h / cell)));
    spec.navmesh = NavMesh(w, h, cell);
    for (const auto& r : mesh_cfg.blocked_rects) spec.navmesh.block_rect(r[0], r[1], r[2], r[3]);

    validate_scenario(spec);
    return spec;
}

ScenarioSpec parse_scenario_string(const std::string& text) {
    std::istringstream is(text);
    return parse_scenario(is);
}

ScenarioSpec parse_scenario_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ScenarioError("cannot open scenario file: " + path);
    try {
        return parse_scenario(f);
    } catch (const ScenarioError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

void write_scenario(const ScenarioSpec& spec, std::ostream& out) {
    out << kVersionLine << '\n';
    out << "scenario_id = " << spec.scenario_id << '\n';
    out << "map_bounds = " << format_double(spec.map_w) << ' ' << format_double(spec.map_h) << '\n';
    out << "dt_physics = " << format_double(spec.dt_physics) << '\n';
    out << "log_interval = " << format_double(spec.log_interval) << '\n';
    out << "max_sim_time = " << format_double(spec.max_sim_time) << '\n';
    out << "stop_on_collision = " << (spec.stop_on_collision ? "true" : "false") << '\n';

    out << "navmesh {\n";
    out << "  cell_size = " << format_double(spec.navmesh.cell_size()) << '\n';
    // Emit blocked cells as unit rects; fine for the small grids in play.
    for (int cy = 0; cy < spec.navmesh.height(); ++cy) {
        for (int cx = 0; cx < spec.navmesh.width(); ++cx) {
            if (spec.navmesh.blocked(GridCell{cx, cy})) {
                out << "  blocked_rect = " << cx << ' ' << cy << ' ' << cx << ' ' << cy << '\n';
            }
        }
    }
    out << "}\n";

    for (const ActorSpec& a : spec.actors) {
        out << "actor {\n";
        out << "  id = " << a.actor_id << '\n';
        out << "  kind = " << (a.kind == ActorKind::vehicle ? "vehicle" : "pedestrian") << '\n';
        out << "  start = " << format_double(a.start.x) << ' ' << format_double(a.start.y) << '\n';
        out << "  cruise_speed = " << format_double(a.cruise_speed) << '\n';
        out << "  radius = " << format_double(a.radius) << '\n';
        if (a.goal) {
            out << "  goal = " << format_double(a.goal->x) << ' ' << format_double(a.goal->y)
                << '\n';
        }
        for (const Position& wp : a.waypoints) {
            out << "  waypoint = " << format_double(wp.x) << ' ' << format_double(wp.y) << '\n';
        }
        if (a.avoidance_range) {
            out << "  avoidance_range = " << format_double(*a.avoidance_range) << '\n';
        }
        out << "}\n";
    }

    const InjectorConfig& inj = spec.injectors;
    out << "injectors {\n";
    out << "  sum_order_shuffle = " << (inj.sum_order_shuffle ? "true" : "false") << '\n';
    out << "  timestep_jitter = " << (inj.timestep_jitter ? "true" : "false") << '\n';
    out << "  timestep_jitter_probability = " << format_double(inj.timestep_jitter_probability)
        << '\n';
    out << "  astar_random_tiebreak = " << (inj.astar_random_tiebreak ? "true" : "false") << '\n';
    out << "  collision_impulse_jitter = " << format_double(inj.collision_impulse_jitter) << '\n';
    if (inj.entropy_seed) out << "  entropy_seed = " << *inj.entropy_seed << '\n';
    out << "}\n";
}

std::string write_scenario_string(const ScenarioSpec& spec) {
    std::ostringstream os;
    write_scenario(spec, os);
    return os.str();
}

void write_scenario_file(const ScenarioSpec& spec, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ScenarioError("cannot open scenario file for writing: " + path);
    write_scenario(spec, f);
    f.flush();
    if (!f) throw ScenarioError("scenario write failed: " + path);
}

}  // namespace simvar::minisim
