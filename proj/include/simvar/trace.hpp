#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simvar {

struct Position {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Position&, const Position&) = default;
};

bool is_finite(const Position& p);

enum class EventKind { none, collision, destroyed };

// Event attached to a trace sample. `other` is set for collision events only.
struct Event {
    EventKind kind = EventKind::none;
    std::string other;

    static Event none() { return {}; }
    static Event collision(std::string with) { return {EventKind::collision, std::move(with)}; }
    static Event destroyed() { return {EventKind::destroyed, {}}; }

    friend bool operator==(const Event&, const Event&) = default;
};

struct TraceSample {
    double t = 0.0;
    std::string actor_id;
    Position position;
    Event event;

    friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

// One simulation execution: time-stamped actor positions plus collision events.
// Samples are sorted by (t, actor_id) with no duplicate (t, actor_id) pairs, and
// each actor's sample times are contiguous from first appearance until it is
// destroyed or the trace ends.
struct RunTrace {
    std::string run_id;
    std::string scenario_id;
    std::uint64_t seed = 0;
    double dt_physics = 0.05;
    double log_interval = 0.1;
    std::vector<TraceSample> samples;
    std::map<std::string, std::string> metadata;
};

// n repeated runs of one scenario under one configuration; the unit of
// variance analysis. All runs share scenario_id, dt_physics and log_interval.
struct RunSet {
    std::string scenario_id;
    std::string config_id;
    std::vector<RunTrace> runs;

    std::size_t n() const { return runs.size(); }
};

// Cross-run view of a single actor: for each sample time, the positions from
// every run in which the actor exists at that time. Variance is only defined
// where presence_count >= 2; other times are retained but flagged unusable.
struct AlignedEntry {
    double t = 0.0;
    std::vector<Position> positions;

    std::size_t presence_count() const { return positions.size(); }
    bool usable() const { return positions.size() >= 2; }
};

struct AlignedSeries {
    std::string actor_id;
    std::vector<AlignedEntry> entries;  // sorted by t
};

class TraceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal encoding: parse(format_double(x)) == x bit-exactly.
std::string format_double(double v);
double parse_double(std::string_view s);  // throws TraceError on garbage

// Line-oriented trace format, bit-exact round trip (see format note in trace.cpp).
void write_trace(const RunTrace& trace, std::ostream& out);
std::string write_trace_string(const RunTrace& trace);
void write_trace_file(const RunTrace& trace, const std::string& path);

RunTrace parse_trace(std::istream& in);
RunTrace parse_trace_string(const std::string& text);
RunTrace parse_trace_file(const std::string& path);

// The determinism test: two traces are identical iff their serialized byte
// streams excluding the metadata line are equal.
std::string trace_body_bytes(const RunTrace& trace);

// Validates the RunTrace invariants (ordering, duplicates, contiguity,
// finiteness, log_interval vs dt_physics). Throws TraceError.
void validate_trace(const RunTrace& trace);

// Checks shared scenario_id / dt_physics / log_interval and n >= 2.
void validate_run_set(const RunSet& rs);

// Groups one actor's positions by identical sample time across runs.
// Throws TraceError if the actor appears in no run.
AlignedSeries align(const RunSet& rs, const std::string& actor_id);

// Sorted union of actor ids over all runs in the set.
std::vector<std::string> actor_ids(const RunSet& rs);

}  // namespace simvar
