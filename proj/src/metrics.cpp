#include "simvar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace simvar {

namespace {

// Corrected two-pass population variance of one axis (Chan/Golub/LeVeque).
// The correction term sum(x_i - mean) cancels most of the rounding left by
// the plain two-pass form; the naive E[x^2] - E[x]^2 form is never used.
// Inputs arrive sorted so the result is a function of the multiset.
double axis_variance(std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs.front(); })) {
        return 0.0;  // identical inputs must yield exactly zero
    }
    std::sort(xs.begin(), xs.end());
    double sum = 0.0;
    for (double v : xs) sum += v;
    const double mean = sum / static_cast<double>(n);
    double ssq = 0.0;
    double comp = 0.0;
    for (double v : xs) {
        const double d = v - mean;
        ssq += d * d;
        comp += d;
    }
    const double var = (ssq - comp * comp / static_cast<double>(n)) / static_cast<double>(n);
    return var > 0.0 ? var : 0.0;
}

AuditResult audit_filtered(const RunSet& rs, Tolerance tol, double t_lo, double t_hi);

}  // namespace

std::string to_string(Verdict v) {
    return v == Verdict::permissible ? "permissible" : "non_permissible";
}

double variance_at(std::span<const Position> positions) {
    if (positions.size() < 2) throw MetricsError("variance needs at least 2 positions");
    for (const Position& p : positions) {
        if (!is_finite(p)) throw MetricsError("non-finite position in variance input");
    }
    std::vector<double> axis(positions.size());
    double var = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < positions.size(); ++i) {
            axis[i] = a == 0 ? positions[i].x : a == 1 ? positions[i].y : positions[i].z;
        }
        var += axis_variance(axis);
    }
    return var;
}

DeviationSeries deviation_series(const AlignedSeries& aligned) {
    DeviationSeries out;
    out.actor_id = aligned.actor_id;
    for (const AlignedEntry& e : aligned.entries) {
        if (!e.usable()) continue;
        const double var = variance_at(e.positions);
        out.entries.push_back(DeviationEntry{e.t, var, std::sqrt(var), e.presence_count()});
    }
    return out;
}

DeviationSeries deviation_series(const RunSet& rs, const std::string& actor_id) {
    return deviation_series(align(rs, actor_id));
}

MaxVariance max_variance(std::span<const DeviationSeries> series) {
    bool found = false;
    MaxVariance best;
    for (const DeviationSeries& s : series) {
        for (const DeviationEntry& e : s.entries) {
            const bool better =
                !found || e.variance > best.psi ||
                (e.variance == best.psi &&
                 (e.t < best.argmax.t || (e.t == best.argmax.t && s.actor_id < best.argmax.actor_id)));
            if (better) {
                best.psi = e.variance;
                best.argmax = ArgMax{s.actor_id, e.t};
                found = true;
            }
        }
    }
    if (!found) throw MetricsError("no (actor, time) pair with presence_count >= 2");
    return best;
}

MaxVariance max_variance(const RunSet& rs) {
    std::vector<DeviationSeries> series;
    for (const std::string& id : actor_ids(rs)) {
        series.push_back(deviation_series(rs, id));
    }
    return max_variance(series);
}

Verdict gate(double max_deviation, Tolerance tol) {
    return max_deviation <= tol.value ? Verdict::permissible : Verdict::non_permissible;
}

std::optional<CollisionInfo> earliest_collision(const RunSet& rs) {
    std::optional<CollisionInfo> best;
    for (const RunTrace& run : rs.runs) {
        for (const TraceSample& s : run.samples) {
            if (s.event.kind != EventKind::collision) continue;
            if (!best || s.t < best->t ||
                (s.t == best->t && s.actor_id < best->actor_id)) {
                best = CollisionInfo{s.t, s.actor_id, s.event.other};
            }
        }
    }
    return best;
}

std::optional<double> earliest_collision_time(const RunSet& rs) {
    const auto info = earliest_collision(rs);
    if (!info) return std::nullopt;
    return info->t;
}

namespace {

AuditResult audit_filtered(const RunSet& rs, Tolerance tol, double t_lo, double t_hi) {
    AuditResult result;
    result.scenario_id = rs.scenario_id;
    result.config_id = rs.config_id;
    result.n = rs.n();
    result.tolerance = tol;

    for (const std::string& id : actor_ids(rs)) {
        DeviationSeries full = deviation_series(rs, id);
        DeviationSeries filtered;
        filtered.actor_id = full.actor_id;
        for (const DeviationEntry& e : full.entries) {
            if (e.t >= t_lo && e.t < t_hi) filtered.entries.push_back(e);
        }
        if (!filtered.entries.empty()) result.per_actor.push_back(std::move(filtered));
    }

    const MaxVariance mv = max_variance(result.per_actor);
    result.psi = mv.psi;
    result.max_deviation = std::sqrt(mv.psi);
    result.argmax = mv.argmax;
    result.verdict = gate(result.max_deviation, tol);
    return result;
}

}  // namespace

PrePostSplit segment_pre_post(const RunSet& rs, Tolerance tol) {
    const std::optional<double> t_split = earliest_collision_time(rs);
    if (!t_split) throw MetricsError("no collision to segment");
    constexpr double inf = std::numeric_limits<double>::infinity();
    PrePostSplit split;
    split.t_split = *t_split;
    split.pre = audit_filtered(rs, tol, -inf, *t_split);
    split.post = audit_filtered(rs, tol, *t_split, inf);
    split.pre.t_split = *t_split;
    split.post.t_split = *t_split;
    return split;
}

double noise_floor(const RunSet& baseline) {
    if (baseline.runs.size() < 2) throw MetricsError("noise-floor baseline too small (n < 2)");
    if (earliest_collision_time(baseline)) {
        throw MetricsError("noise-floor baseline must be collision-free");
    }
    return std::sqrt(max_variance(baseline).psi);
}

AuditResult audit(const RunSet& rs, Tolerance tol, std::optional<double> noise_floor_m) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    AuditResult result = audit_filtered(rs, tol, -inf, inf);
    result.noise_floor = noise_floor_m;
    if (const auto collision = earliest_collision(rs)) {
        result.collision_actors = std::make_pair(collision->actor_id, collision->other_id);
        PrePostSplit split = segment_pre_post(rs, tol);
        result.t_split = split.t_split;
        // A side can be empty of usable samples (e.g. collision on the first
        // logged tick); report it as absent rather than zero.
        result.pre_collision_max_deviation =
            split.pre.per_actor.empty() ? std::optional<double>{} : split.pre.max_deviation;
        result.post_collision_max_deviation =
            split.post.per_actor.empty() ? std::optional<double>{} : split.post.max_deviation;
    }
    return result;
}

void write_series_csv(const DeviationSeries& series, std::ostream& out,
                      std::optional<double> noise_floor_m) {
    out << "t,actor_id,deviation_m,presence_count";
    if (noise_floor_m) out << ",noise_floor_m";
    out << '\n';
    for (const DeviationEntry& e : series.entries) {
        out << format_double(e.t) << ',' << series.actor_id << ',' << format_double(e.deviation)
            << ',' << e.presence_count;
        if (noise_floor_m) out << ',' << format_double(*noise_floor_m);
        out << '\n';
    }
}

std::string summary_text(const AuditResult& r) {
    std::ostringstream os;
    os << "scenario_id=" << r.scenario_id << '\n';
    os << "config_id=" << r.config_id << '\n';
    os << "n=" << r.n << '\n';
    os << "psi_m2=" << format_double(r.psi) << '\n';
    os << "max_deviation_m=" << format_double(r.max_deviation) << '\n';
    os << "argmax_actor=" << r.argmax.actor_id << '\n';
    os << "argmax_t=" << format_double(r.argmax.t) << '\n';
    os << "tolerance_m=" << format_double(r.tolerance.value) << '\n';
    os << "verdict=" << to_string(r.verdict) << '\n';
    if (r.t_split) os << "t_split=" << format_double(*r.t_split) << '\n';
    if (r.pre_collision_max_deviation) {
        os << "pre_collision_max_deviation_m=" << format_double(*r.pre_collision_max_deviation)
           << '\n';
    }
    if (r.post_collision_max_deviation) {
        os << "post_collision_max_deviation_m=" << format_double(*r.post_collision_max_deviation)
           << '\n';
    }
    if (r.noise_floor) os << "noise_floor_m=" << format_double(*r.noise_floor) << '\n';
    os << "variance_scalarization=sum_of_axis_variances\n";
    os << "split_rule=earliest_collision\n";
    os << "presence_policy=min2_contributing_runs\n";
    return os.str();
}

}  // namespace simvar
