#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "simvar/trace.hpp"

using namespace simvar;

namespace {

RunTrace small_trace() {
    RunTrace t;
    t.run_id = "run0";
    t.scenario_id = "demo";
    t.seed = 42;
    t.dt_physics = 0.05;
    t.log_interval = 0.1;
    t.samples.push_back({0.1, "v1", {0.0, 0.0, 0.0}, Event::none()});
    return t;
}

// Random but invariant-respecting traces for the round-trip property.
RunTrace random_trace(std::mt19937_64& rng) {
    RunTrace t;
    t.run_id = "run" + std::to_string(rng() % 100);
    t.scenario_id = "prop";
    t.seed = rng();
    t.dt_physics = 0.05;
    t.log_interval = 0.1;
    t.metadata["note"] = "generated";

    std::uniform_int_distribution<int> n_actors(1, 4);
    std::uniform_int_distribution<int> n_ticks(0, 40);
    std::uniform_int_distribution<int> start_tick(0, 5);
    std::uniform_real_distribution<double> coord(-1e8, 1e8);
    std::uniform_int_distribution<int> exp_shift(-12, 12);

    const int actors = n_actors(rng);
    struct Span {
        std::string id;
        int first;
        int last;
        bool destroyed;
    };
    std::vector<Span> spans;
    for (int a = 0; a < actors; ++a) {
        const int first = start_tick(rng);
        const int last = first + n_ticks(rng);
        spans.push_back({"actor" + std::to_string(a), first, last, (rng() & 1) != 0});
    }
    const int max_tick = 50;
    for (int tick = 0; tick <= max_tick; ++tick) {
        for (const Span& span : spans) {
            if (tick < span.first || tick > span.last) continue;
            TraceSample s;
            s.t = tick * 0.1;
            s.actor_id = span.id;
            const double scale = std::pow(10.0, exp_shift(rng));
            s.position = {coord(rng) * scale, coord(rng) * scale, 0.0};
            if (tick == span.last && span.destroyed) {
                s.event = Event::destroyed();
            } else if (rng() % 20 == 0) {
                s.event = Event::collision("actor" + std::to_string(rng() % actors));
            }
            t.samples.push_back(std::move(s));
        }
    }
    return t;
}

}  // namespace

TEST_CASE("format_double emits shortest round-trip decimals") {
    CHECK(format_double(0.1 + 0.2) == "0.30000000000000004");
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(0.1) == "0.1");
    CHECK(parse_double("0.30000000000000004") == 0.1 + 0.2);
}

TEST_CASE("write_trace emits header plus one line per sample") {
    const std::string text = write_trace_string(small_trace());
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    CHECK(line == "#simvar-trace v1");
    std::getline(is, line);
    CHECK(line.rfind("#meta run_id=run0;scenario_id=demo;seed=42;", 0) == 0);
    std::getline(is, line);
    CHECK(line == "0.1,v1,0,0,0,none");
    CHECK_FALSE(std::getline(is, line));
}

TEST_CASE("empty sample list writes a header-only file") {
    RunTrace t = small_trace();
    t.samples.clear();
    const std::string text = write_trace_string(t);
    CHECK(parse_trace_string(text).samples.empty());
}

TEST_CASE("round trip is bit-exact for randomized traces") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 50; ++i) {
        const RunTrace original = random_trace(rng);
        const std::string bytes = write_trace_string(original);
        const RunTrace parsed = parse_trace_string(bytes);
        REQUIRE(parsed.samples.size() == original.samples.size());
        for (std::size_t k = 0; k < parsed.samples.size(); ++k) {
            CHECK(parsed.samples[k] == original.samples[k]);
        }
        CHECK(parsed.seed == original.seed);
        CHECK(parsed.metadata == original.metadata);
        // write(parse(write(x))) == write(x) byte-for-byte
        CHECK(write_trace_string(parsed) == bytes);
    }
}

TEST_CASE("trace identity is the serialized body excluding metadata") {
    RunTrace a = small_trace();
    RunTrace b = small_trace();
    b.run_id = "run1";
    b.metadata["util_observed"] = "12.5";
    CHECK(trace_body_bytes(a) == trace_body_bytes(b));
    b.samples[0].position.x = 1e-13;
    CHECK(trace_body_bytes(a) != trace_body_bytes(b));
}

TEST_CASE("parse rejects malformed rows with the row number") {
    const std::string header = "#simvar-trace v1\n#meta run_id=r;scenario_id=s;seed=1;dt_physics=0.05;log_interval=0.1\n";

    SUBCASE("non-monotone time") {
        const std::string text = header + "0.2,v1,0,0,0,none\n0.1,v1,0,0,0,none\n";
        CHECK_THROWS_WITH_AS(parse_trace_string(text), "non-monotone time at row 4", TraceError);
    }
    SUBCASE("duplicate (t, actor_id)") {
        const std::string text = header + "0.1,v1,0,0,0,none\n0.1,v1,1,0,0,none\n";
        CHECK_THROWS_WITH_AS(parse_trace_string(text), "duplicate (t, actor_id) at row 4",
                             TraceError);
    }
    SUBCASE("wrong field count") {
        const std::string text = header + "0.1,v1,0,0,none\n";
        CHECK_THROWS_AS(parse_trace_string(text), TraceError);
    }
    SUBCASE("garbage number") {
        const std::string text = header + "0.1,v1,zero,0,0,none\n";
        CHECK_THROWS_AS(parse_trace_string(text), TraceError);
    }
    SUBCASE("unknown event") {
        const std::string text = header + "0.1,v1,0,0,0,exploded\n";
        CHECK_THROWS_AS(parse_trace_string(text), TraceError);
    }
    SUBCASE("sample after destruction") {
        const std::string text = header + "0.1,v1,0,0,0,destroyed\n0.2,v1,0,0,0,none\n";
        CHECK_THROWS_AS(parse_trace_string(text), TraceError);
    }
    SUBCASE("non-contiguous actor samples") {
        const std::string text = header + "0.1,v1,0,0,0,none\n0.3,v1,0,0,0,none\n";
        CHECK_THROWS_AS(parse_trace_string(text), TraceError);
    }
    SUBCASE("missing meta") {
        CHECK_THROWS_AS(parse_trace_string("#simvar-trace v1\n0.1,v1,0,0,0,none\n"), TraceError);
    }
    SUBCASE("bad version line") {
        CHECK_THROWS_AS(parse_trace_string("#simvar-trace v2\n"), TraceError);
    }
}

TEST_CASE("validate_trace rejects non-finite positions") {
    RunTrace t = small_trace();
    t.samples[0].position.y = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate_trace(t), TraceError);
}

namespace {

RunSet three_run_set() {
    RunSet rs;
    rs.scenario_id = "demo";
    rs.config_id = "cfg";
    for (int r = 0; r < 3; ++r) {
        RunTrace t;
        t.run_id = "run" + std::to_string(r);
        t.scenario_id = "demo";
        t.seed = 42;
        t.dt_physics = 0.05;
        t.log_interval = 0.1;
        t.samples.push_back({0.1, "v1", {1.0 + r, 0, 0}, Event::none()});
        t.samples.push_back({0.2, "v1", {2.0 + r, 0, 0}, Event::none()});
        rs.runs.push_back(std::move(t));
    }
    return rs;
}

}  // namespace

TEST_CASE("align groups positions by identical sample time") {
    const RunSet rs = three_run_set();
    const AlignedSeries series = align(rs, "v1");
    REQUIRE(series.entries.size() == 2);
    CHECK(series.entries[0].t == 0.1);
    CHECK(series.entries[0].presence_count() == 3);
    CHECK(series.entries[1].presence_count() == 3);
    CHECK(series.entries[0].usable());
}

TEST_CASE("align: destruction ends contribution in that run") {
    RunSet rs;
    rs.scenario_id = "demo";
    for (int r = 0; r < 3; ++r) {
        RunTrace t;
        t.run_id = "run" + std::to_string(r);
        t.scenario_id = "demo";
        t.seed = 1;
        t.dt_physics = 0.05;
        t.log_interval = 0.1;
        const int last_tick = (r == 0) ? 60 : 80;  // run 0 destroys the actor at t=6.0
        for (int tick = 0; tick <= last_tick; ++tick) {
            TraceSample s{tick * 0.1, "ped", {0.5 * tick, 0, 0}, Event::none()};
            if (r == 0 && tick == last_tick) s.event = Event::destroyed();
            t.samples.push_back(std::move(s));
        }
        rs.runs.push_back(std::move(t));
    }

    const AlignedSeries series = align(rs, "ped");
    std::size_t total = 0;
    for (const AlignedEntry& e : series.entries) {
        total += e.presence_count();
        if (e.t <= 6.0) {
            CHECK(e.presence_count() == 3);
        } else {
            CHECK(e.presence_count() == 2);
        }
    }
    // Sum over presence counts equals total samples of the actor across runs.
    CHECK(total == 61 + 81 + 81);
}

TEST_CASE("align: actor present in a single run is retained but unusable") {
    RunSet rs = three_run_set();
    rs.runs[0].samples.push_back({0.3, "x9", {0, 0, 0}, Event::none()});
    const AlignedSeries series = align(rs, "x9");
    REQUIRE(series.entries.size() == 1);
    CHECK_FALSE(series.entries[0].usable());
}

TEST_CASE("align rejects an actor absent everywhere") {
    CHECK_THROWS_AS(align(three_run_set(), "ghost"), TraceError);
}

TEST_CASE("run sets must agree on scenario and timing") {
    RunSet rs = three_run_set();
    rs.runs[1].log_interval = 0.2;
    CHECK_THROWS_AS(validate_run_set(rs), TraceError);
    RunSet small = three_run_set();
    small.runs.resize(1);
    CHECK_THROWS_AS(validate_run_set(small), TraceError);
}
