#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simvar/trace.hpp"

namespace simvar {

// Per-actor dispersion over time. Entries exist only at times where the actor
// is present in at least two runs; deviation = sqrt(variance).
struct DeviationEntry {
    double t = 0.0;
    double variance = 0.0;  // m^2
    double deviation = 0.0; // m
    std::size_t presence_count = 0;
};

struct DeviationSeries {
    std::string actor_id;
    std::vector<DeviationEntry> entries;
};

struct Tolerance {
    double value = 0.01;  // meters, > 0
};

enum class Verdict { permissible, non_permissible };

std::string to_string(Verdict v);

struct ArgMax {
    std::string actor_id;
    double t = 0.0;
};

struct AuditResult {
    std::string scenario_id;
    std::string config_id;
    std::size_t n = 0;
    double psi = 0.0;            // largest cross-run variance over all (actor, t), m^2
    double max_deviation = 0.0;  // sqrt(psi), m
    ArgMax argmax;
    std::vector<DeviationSeries> per_actor;  // sorted by actor_id
    std::optional<double> pre_collision_max_deviation;
    std::optional<double> post_collision_max_deviation;
    std::optional<double> t_split;
    std::optional<std::pair<std::string, std::string>> collision_actors;
    std::optional<double> noise_floor;
    Tolerance tolerance;
    Verdict verdict = Verdict::permissible;
};

class MetricsError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Population variance summed over the three axes: (1/n) * sum_i |p_i - mean|^2.
// Bitwise permutation-invariant; exactly 0 iff all positions are bitwise
// identical (normal-range inputs). Throws MetricsError on n < 2 or non-finite
// input.
double variance_at(std::span<const Position> positions);

// sigma_a(t): variance_at over the aligned positions at every usable time.
DeviationSeries deviation_series(const RunSet& rs, const std::string& actor_id);
DeviationSeries deviation_series(const AlignedSeries& aligned);

// Psi: the largest variance of any actor at any time. Ties broken by smaller
// t, then lexicographic actor_id. Throws MetricsError if no (actor, t) has
// presence_count >= 2.
struct MaxVariance {
    double psi = 0.0;
    ArgMax argmax;
};
MaxVariance max_variance(const RunSet& rs);
MaxVariance max_variance(std::span<const DeviationSeries> series);

// Permissible iff max_deviation <= tolerance; boundary equality is permissible.
Verdict gate(double max_deviation, Tolerance tol);

struct PrePostSplit {
    AuditResult pre;
    AuditResult post;
    double t_split = 0.0;  // earliest collision time across all runs
};

// Splits the set at the earliest collision logged in any run: pre takes
// t < t_split, post takes t >= t_split. Throws MetricsError when no run
// contains a collision.
PrePostSplit segment_pre_post(const RunSet& rs, Tolerance tol);

// Earliest collision time over all runs, if any collision was logged.
std::optional<double> earliest_collision_time(const RunSet& rs);

struct CollisionInfo {
    double t = 0.0;
    std::string actor_id;
    std::string other_id;
};
std::optional<CollisionInfo> earliest_collision(const RunSet& rs);

// maxsigma of a designated zero-load, no-collision baseline set. Throws
// MetricsError if n < 2 or the baseline contains a collision.
double noise_floor(const RunSet& baseline);

// Full per-set analysis: per-actor series, Psi, pre/post segmentation when a
// collision exists, tolerance verdict.
AuditResult audit(const RunSet& rs, Tolerance tol,
                  std::optional<double> noise_floor_m = std::nullopt);

// Plot-ready CSV rows `t,actor_id,deviation_m,presence_count` for one series.
void write_series_csv(const DeviationSeries& series, std::ostream& out,
                      std::optional<double> noise_floor_m = std::nullopt);

// Flat key=value summary of an AuditResult (full precision).
std::string summary_text(const AuditResult& result);

}  // namespace simvar
