#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "simvar/pathfind.hpp"
#include "simvar/trace.hpp"

namespace simvar::minisim {

class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Switchable emulations of real-world non-determinism sources. With every
// flag off, simulate() is a pure function of (ScenarioSpec, seed).
//
// entropy_seed seeds the injectors' RNG; when absent they draw from a
// non-reproducible entropy source, modeling true non-determinism.
struct InjectorConfig {
    bool sum_order_shuffle = false;          // permute force-term summation order per step
    bool timestep_jitter = false;            // randomly drop/duplicate one physics sub-step per tick
    double timestep_jitter_probability = 0.0;
    bool astar_random_tiebreak = false;      // unstable A* frontier
    double collision_impulse_jitter = 0.0;   // epsilon, m/s added to post-collision velocity
    std::optional<std::uint64_t> entropy_seed;

    bool any_enabled() const {
        return sum_order_shuffle || timestep_jitter || astar_random_tiebreak ||
               collision_impulse_jitter > 0.0;
    }
};

enum class ActorKind { vehicle, pedestrian };

struct ActorSpec {
    std::string actor_id;
    ActorKind kind = ActorKind::vehicle;
    Position start;
    std::vector<Position> waypoints;   // explicit route (densified on load), or
    std::optional<Position> goal;      // goal for navmesh planning
    double cruise_speed = 1.0;         // m/s
    double radius = 1.0;               // collision circle, m
    std::optional<double> avoidance_range;  // yield when another actor is within r
};

struct ScenarioSpec {
    std::string scenario_id;
    double map_w = 50.0;
    double map_h = 30.0;
    NavMesh navmesh;                   // defaults to an all-free 1 m grid over the map
    std::vector<ActorSpec> actors;
    double dt_physics = 0.05;
    double log_interval = 0.1;
    double max_sim_time = 20.0;
    bool stop_on_collision = false;
    InjectorConfig injectors;

    int substeps_per_tick() const;
};

void validate_scenario(const ScenarioSpec& spec);

// PID controller with clamped integral (anti-windup).
struct PidState {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    double integral_limit = 1.0;
    double integral = 0.0;
    double prev_error = 0.0;
    bool has_prev = false;
};

// command = kp*e + ki*integral(e) + kd*de/dt. When `shuffle_rng` is non-null
// the three terms are summed in a random order (the floating-point
// non-associativity injector); otherwise the order is fixed.
double pid_step(PidState& state, double error, double dt, std::mt19937_64* shuffle_rng = nullptr);

// Post-collision impulse along the center line, restitution 0.5, with a
// uniform perturbation of magnitude <= jitter on each velocity component.
struct BodyState {
    Position pos;
    double vx = 0.0;
    double vy = 0.0;
    double mass = 1.0;
    double radius = 1.0;
};

struct CollisionOutcome {
    BodyState a;
    BodyState b;
};

CollisionOutcome resolve_collision(const BodyState& a, const BodyState& b, double restitution,
                                   double jitter, std::mt19937_64* jitter_rng);

// Runs the fixed-timestep loop and returns the logged trace. Terminates at
// max_sim_time, when all live actors have reached their final waypoints, or
// at the first collision when stop_on_collision is set.
RunTrace simulate(const ScenarioSpec& spec, std::uint64_t seed);

// Default gains frozen after step-response tuning (see test_minisim.cpp).
PidState default_speed_pid();
PidState default_heading_pid();

}  // namespace simvar::minisim
