#include "simvar/minisim.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace simvar::minisim {

namespace {

constexpr double kWaypointSpacing = 0.1;
constexpr double kLookahead = 2.0;      // pure-pursuit target distance; > v/max yaw rate
constexpr double kGoalTolerance = 0.3;  // final waypoint arrival radius, m
constexpr double kMaxAccel = 6.0;       // m/s^2; above the speed PID's ramp commands
constexpr double kMaxYawRate = 2.0;     // rad/s
constexpr double kRestitution = 0.5;
constexpr double kVehicleMass = 1000.0;
constexpr double kPedestrianMass = 100.0;

double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

std::uint64_t nondeterministic_seed() {
    std::random_device rd;
    const auto now = std::chrono::steady_clock::now().time_since_epoch().count();
    return (static_cast<std::uint64_t>(rd()) << 32) ^ static_cast<std::uint64_t>(rd()) ^
           static_cast<std::uint64_t>(now);
}

struct ActorRuntime {
    const ActorSpec* spec = nullptr;
    std::vector<Position> route;
    std::size_t wp_index = 0;
    Position pos;
    double heading = 0.0;
    double speed = 0.0;   // vehicles: along heading
    double vx = 0.0;      // last realized velocity, used by collision response
    double vy = 0.0;
    PidState pid_speed;
    PidState pid_heading;
    bool yielding = false;
    bool finished = false;
    bool destroyed = false;
    // Event accumulated since the last logged tick.
    Event pending_event;

    double mass() const {
        return spec->kind == ActorKind::vehicle ? kVehicleMass : kPedestrianMass;
    }
};

void note_event(ActorRuntime& a, const Event& e) {
    // destroyed outranks collision outranks none
    if (a.pending_event.kind == EventKind::destroyed) return;
    if (e.kind == EventKind::destroyed || a.pending_event.kind == EventKind::none) {
        a.pending_event = e;
    }
}

// Order-permuted accumulate for the pose integrator. Engines sum several
// displacement contributions per step (pose, v*dt, solver corrections); the
// third term stands in for that tail at one-ulp scale, so which rounding the
// sum picks up depends on the order drawn. Noise lands at machine-epsilon
// scale relative to the coordinate.
double accumulate_shuffled(double value, double delta, std::mt19937_64* shuffle_rng) {
    if (!shuffle_rng) return value + delta;
    std::array<double, 3> terms{value, delta, value * 0x1p-51};
    std::shuffle(terms.begin(), terms.end(), *shuffle_rng);
    return (terms[0] + terms[1]) + terms[2];
}

void step_vehicle(ActorRuntime& a, double dt, double target_speed, std::mt19937_64* shuffle) {
    if (!a.finished) {
        while (a.wp_index + 1 < a.route.size()) {
            const Position& wp = a.route[a.wp_index];
            if (std::hypot(wp.x - a.pos.x, wp.y - a.pos.y) > kLookahead) break;
            ++a.wp_index;
        }
        const Position& target = a.route[a.wp_index];
        const double dist = std::hypot(target.x - a.pos.x, target.y - a.pos.y);
        if (a.wp_index + 1 == a.route.size() && dist <= kGoalTolerance) {
            a.finished = true;
        } else {
            const double bearing = std::atan2(target.y - a.pos.y, target.x - a.pos.x);
            const double heading_err = wrap_angle(bearing - a.heading);
            const double omega =
                std::clamp(pid_step(a.pid_heading, heading_err, dt, shuffle), -kMaxYawRate,
                           kMaxYawRate);
            a.heading = wrap_angle(a.heading + omega * dt);
        }
    }
    const double want = a.finished ? 0.0 : target_speed;
    const double accel =
        std::clamp(pid_step(a.pid_speed, want - a.speed, dt, shuffle), -kMaxAccel, kMaxAccel);
    a.speed = std::max(0.0, a.speed + accel * dt);
    a.vx = a.speed * std::cos(a.heading);
    a.vy = a.speed * std::sin(a.heading);
    a.pos.x = accumulate_shuffled(a.pos.x, a.vx * dt, shuffle);
    a.pos.y = accumulate_shuffled(a.pos.y, a.vy * dt, shuffle);
}

void step_pedestrian(ActorRuntime& a, double dt, bool yield) {
    if (a.finished || yield) {
        a.vx = 0.0;
        a.vy = 0.0;
        return;
    }
    const Position before = a.pos;
    double remaining = a.spec->cruise_speed * dt;
    while (remaining > 0.0 && a.wp_index < a.route.size()) {
        const Position& wp = a.route[a.wp_index];
        const double d = std::hypot(wp.x - a.pos.x, wp.y - a.pos.y);
        if (d <= remaining) {
            a.pos = wp;
            remaining -= d;
            ++a.wp_index;
        } else {
            const double f = remaining / d;
            a.pos.x += f * (wp.x - a.pos.x);
            a.pos.y += f * (wp.y - a.pos.y);
            remaining = 0.0;
        }
    }
    if (a.wp_index == a.route.size()) a.finished = true;
    a.vx = (a.pos.x - before.x) / dt;
    a.vy = (a.pos.y - before.y) / dt;
}

}  // namespace

int ScenarioSpec::substeps_per_tick() const {
    return static_cast<int>(std::round(log_interval / dt_physics));
}

void validate_scenario(const ScenarioSpec& spec) {
    if (spec.scenario_id.empty()) throw ScenarioError("scenario_id must not be empty");
    if (spec.dt_physics <= 0.0) throw ScenarioError("dt_physics must be positive");
    if (spec.map_w <= 0.0 || spec.map_h <= 0.0) throw ScenarioError("map bounds must be positive");
    const double ratio = spec.log_interval / spec.dt_physics;
    if (spec.log_interval <= 0.0 || std::abs(ratio - std::round(ratio)) > 1e-9 ||
        std::round(ratio) < 1.0) {
        throw ScenarioError("log_interval must be a positive integer multiple of dt_physics");
    }
    if (spec.max_sim_time <= 0.0) throw ScenarioError("max_sim_time must be positive");
    if (spec.injectors.timestep_jitter_probability < 0.0 ||
        spec.injectors.timestep_jitter_probability > 1.0) {
        throw ScenarioError("timestep_jitter_probability must be in [0, 1]");
    }
    if (spec.injectors.collision_impulse_jitter < 0.0) {
        throw ScenarioError("collision_impulse_jitter must be >= 0");
    }
    if (spec.actors.empty()) throw ScenarioError("scenario needs at least one actor");

    std::set<std::string> ids;
    for (const ActorSpec& a : spec.actors) {
        if (a.actor_id.empty()) throw ScenarioError("actor id must not be empty");
        if (!ids.insert(a.actor_id).second) {
            throw ScenarioError("duplicate actor id '" + a.actor_id + "'");
        }
        if (a.cruise_speed <= 0.0) throw ScenarioError(a.actor_id + ": cruise_speed must be > 0");
        if (a.radius <= 0.0) throw ScenarioError(a.actor_id + ": radius must be > 0");
        if (a.waypoints.empty() && !a.goal) {
            throw ScenarioError(a.actor_id + ": needs waypoints or a goal");
        }
        if (a.avoidance_range && *a.avoidance_range <= 0.0) {
            throw ScenarioError(a.actor_id + ": avoidance range must be > 0");
        }
        auto inside = [&](const Position& p) {
            return p.x >= 0.0 && p.x <= spec.map_w && p.y >= 0.0 && p.y <= spec.map_h;
        };
        if (!inside(a.start)) throw ScenarioError(a.actor_id + ": start outside map bounds");
        for (const Position& wp : a.waypoints) {
            if (!inside(wp)) throw ScenarioError(a.actor_id + ": waypoint outside map bounds");
        }
        if (a.goal && !inside(*a.goal)) throw ScenarioError(a.actor_id + ": goal outside map bounds");
    }
}

// All three gains nonzero so the command is a three-term sum; the
// sum-order-shuffle injector needs that (two-term addition commutes exactly).
PidState default_speed_pid() {
    PidState s;
    s.kp = 2.0;
    s.ki = 0.5;
    s.kd = 0.05;
    s.integral_limit = 2.0;
    return s;
}

PidState default_heading_pid() {
    PidState s;
    s.kp = 4.0;
    s.ki = 0.05;
    s.kd = 0.5;
    s.integral_limit = 0.5;
    return s;
}

double pid_step(PidState& state, double error, double dt, std::mt19937_64* shuffle_rng) {
    if (dt <= 0.0) throw ScenarioError("pid_step requires dt > 0");
    state.integral = std::clamp(state.integral + error * dt, -state.integral_limit,
                                state.integral_limit);
    const double derivative = state.has_prev ? (error - state.prev_error) / dt : 0.0;
    state.prev_error = error;
    state.has_prev = true;

    std::array<double, 3> terms{state.kp * error, state.ki * state.integral,
                                state.kd * derivative};
    if (shuffle_rng) {
        std::shuffle(terms.begin(), terms.end(), *shuffle_rng);
    }
    return (terms[0] + terms[1]) + terms[2];
}

CollisionOutcome resolve_collision(const BodyState& a, const BodyState& b, double restitution,
                                   double jitter, std::mt19937_64* jitter_rng) {
    CollisionOutcome out{a, b};
    double nx = b.pos.x - a.pos.x;
    double ny = b.pos.y - a.pos.y;
    const double dist = std::hypot(nx, ny);
    if (dist > 0.0) {
        nx /= dist;
        ny /= dist;
    } else {
        nx = 1.0;
        ny = 0.0;
    }

    // Impulse only when approaching; separating bodies just get pushed apart.
    const double rel_vn = (b.vx - a.vx) * nx + (b.vy - a.vy) * ny;
    if (rel_vn < 0.0) {
        const double inv_mass = 1.0 / a.mass + 1.0 / b.mass;
        const double j = -(1.0 + restitution) * rel_vn / inv_mass;
        out.a.vx -= j * nx / a.mass;
        out.a.vy -= j * ny / a.mass;
        out.b.vx += j * nx / b.mass;
        out.b.vy += j * ny / b.mass;
    }

    if (jitter > 0.0 && jitter_rng) {
        std::uniform_real_distribution<double> u(-jitter, jitter);
        out.a.vx += u(*jitter_rng);
        out.a.vy += u(*jitter_rng);
        out.b.vx += u(*jitter_rng);
        out.b.vy += u(*jitter_rng);
    }

    // Positional correction to exact touching, weighted by inverse mass.
    const double overlap = (a.radius + b.radius) - dist;
    if (overlap > 0.0) {
        const double wa = (1.0 / a.mass) / (1.0 / a.mass + 1.0 / b.mass);
        const double wb = 1.0 - wa;
        out.a.pos.x -= overlap * wa * nx;
        out.a.pos.y -= overlap * wa * ny;
        out.b.pos.x += overlap * wb * nx;
        out.b.pos.y += overlap * wb * ny;
    }
    return out;
}

RunTrace simulate(const ScenarioSpec& spec, std::uint64_t seed) {
    validate_scenario(spec);

    const InjectorConfig& inj = spec.injectors;
    std::mt19937_64 injector_rng(inj.entropy_seed ? *inj.entropy_seed : nondeterministic_seed());
    std::mt19937_64* shuffle = inj.sum_order_shuffle ? &injector_rng : nullptr;

    // Actor setup, in lexicographic id order so logging order matches the
    // trace sort invariant.
    std::vector<ActorRuntime> actors(spec.actors.size());
    {
        std::vector<const ActorSpec*> sorted;
        for (const ActorSpec& a : spec.actors) sorted.push_back(&a);
        std::sort(sorted.begin(), sorted.end(),
                  [](const ActorSpec* a, const ActorSpec* b) { return a->actor_id < b->actor_id; });
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            ActorRuntime& rt = actors[i];
            rt.spec = sorted[i];
            rt.pos = rt.spec->start;
            if (!rt.spec->waypoints.empty()) {
                rt.route = densify(rt.spec->waypoints, kWaypointSpacing);
            } else {
                const FrontierMode mode = inj.astar_random_tiebreak
                                              ? FrontierMode::random_tiebreak
                                              : FrontierMode::stable_insertion_order;
                rt.route = plan_path(spec.navmesh, rt.spec->start, *rt.spec->goal, mode,
                                     injector_rng, kWaypointSpacing);
            }
            if (rt.route.empty()) rt.route.push_back(rt.pos);
            rt.pid_speed = default_speed_pid();
            rt.pid_heading = default_heading_pid();
            const Position& first = rt.route.size() > 1 ? rt.route[1] : rt.route[0];
            if (first.x != rt.pos.x || first.y != rt.pos.y) {
                rt.heading = std::atan2(first.y - rt.pos.y, first.x - rt.pos.x);
            }
        }
    }

    RunTrace trace;
    trace.scenario_id = spec.scenario_id;
    trace.seed = seed;
    trace.dt_physics = spec.dt_physics;
    trace.log_interval = spec.log_interval;

    const int base_substeps = spec.substeps_per_tick();
    const long long max_ticks =
        static_cast<long long>(std::round(spec.max_sim_time / spec.log_interval));
    long long physics_steps = 0;

    std::set<std::pair<std::size_t, std::size_t>> in_contact;

    auto log_tick = [&](long long tick) -> bool {
        const double t = static_cast<double>(tick) * spec.log_interval;
        bool saw_collision = false;
        for (ActorRuntime& a : actors) {
            if (a.destroyed && a.pending_event.kind != EventKind::destroyed) continue;
            TraceSample s;
            s.t = t;
            s.actor_id = a.spec->actor_id;
            s.position = a.pos;
            s.event = a.pending_event;
            if (s.event.kind != EventKind::none) saw_collision = true;
            a.pending_event = Event::none();
            trace.samples.push_back(std::move(s));
        }
        return saw_collision;
    };

    auto live = [](const ActorRuntime& a) { return !a.destroyed; };

    log_tick(0);

    for (long long tick = 1; tick <= max_ticks; ++tick) {
        // Input phase: avoidance decisions for this tick.
        for (ActorRuntime& a : actors) {
            a.yielding = false;
            if (!live(a) || !a.spec->avoidance_range) continue;
            for (const ActorRuntime& other : actors) {
                if (&other == &a || !live(other)) continue;
                const double d = std::hypot(other.pos.x - a.pos.x, other.pos.y - a.pos.y);
                if (d <= *a.spec->avoidance_range) {
                    a.yielding = true;
                    break;
                }
            }
        }

        int substeps = base_substeps;
        if (inj.timestep_jitter) {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            if (u01(injector_rng) < inj.timestep_jitter_probability) {
                substeps += (injector_rng() & 1) ? 1 : -1;
                substeps = std::max(substeps, 0);
            }
        }

        for (int step = 0; step < substeps; ++step) {
            ++physics_steps;
            for (ActorRuntime& a : actors) {
                if (!live(a)) continue;
                if (a.spec->kind == ActorKind::vehicle) {
                    step_vehicle(a, spec.dt_physics, a.yielding ? 0.0 : a.spec->cruise_speed,
                                 shuffle);
                } else {
                    step_pedestrian(a, spec.dt_physics, a.yielding);
                }
            }

            // Collision pass: pairs in id order; an event fires on new contact only.
            for (std::size_t i = 0; i < actors.size(); ++i) {
                for (std::size_t j = i + 1; j < actors.size(); ++j) {
                    ActorRuntime& a = actors[i];
                    ActorRuntime& b = actors[j];
                    if (!live(a) || !live(b)) continue;
                    const double d = std::hypot(b.pos.x - a.pos.x, b.pos.y - a.pos.y);
                    const bool touching = d < a.spec->radius + b.spec->radius;
                    const auto key = std::make_pair(i, j);
                    if (!touching) {
                        in_contact.erase(key);
                        continue;
                    }
                    if (in_contact.contains(key)) continue;
                    in_contact.insert(key);

                    const BodyState sa{a.pos, a.vx, a.vy, a.mass(), a.spec->radius};
                    const BodyState sb{b.pos, b.vx, b.vy, b.mass(), b.spec->radius};
                    const CollisionOutcome res =
                        resolve_collision(sa, sb, kRestitution, inj.collision_impulse_jitter,
                                          inj.collision_impulse_jitter > 0.0 ? &injector_rng
                                                                             : nullptr);
                    auto apply = [](ActorRuntime& rt, const BodyState& s) {
                        rt.pos = s.pos;
                        rt.vx = s.vx;
                        rt.vy = s.vy;
                        if (rt.spec->kind == ActorKind::vehicle) {
                            rt.speed = std::hypot(s.vx, s.vy);
                            if (rt.speed > 1e-12) rt.heading = std::atan2(s.vy, s.vx);
                        }
                    };
                    apply(a, res.a);
                    apply(b, res.b);

                    // A pedestrian struck by a vehicle is destroyed.
                    const bool a_vehicle = a.spec->kind == ActorKind::vehicle;
                    const bool b_vehicle = b.spec->kind == ActorKind::vehicle;
                    if (a_vehicle && !b_vehicle) {
                        note_event(a, Event::collision(b.spec->actor_id));
                        note_event(b, Event::destroyed());
                        b.destroyed = true;
                    } else if (!a_vehicle && b_vehicle) {
                        note_event(a, Event::destroyed());
                        note_event(b, Event::collision(a.spec->actor_id));
                        a.destroyed = true;
                    } else {
                        note_event(a, Event::collision(b.spec->actor_id));
                        note_event(b, Event::collision(a.spec->actor_id));
                    }
                }
            }
        }

        const bool saw_event = log_tick(tick);
        if (saw_event && spec.stop_on_collision) break;

        bool all_done = true;
        for (const ActorRuntime& a : actors) {
            if (live(a) && !a.finished) {
                all_done = false;
                break;
            }
        }
        if (all_done) break;
    }

    trace.metadata["physics_steps"] = std::to_string(physics_steps);
    validate_trace(trace);
    return trace;
}

}  // namespace simvar::minisim
