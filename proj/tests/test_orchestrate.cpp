#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "simvar/catalog.hpp"
#include "simvar/metrics.hpp"
#include "simvar/orchestrate.hpp"
#include "simvar/scenario_io.hpp"
#include "simvar/trace.hpp"

using namespace simvar;
using namespace simvar::orchestrate;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "simvar-tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CampaignConfig small_config(const std::string& id, const fs::path& out, std::size_t n) {
    CampaignConfig config;
    config.config_id = id;
    config.campaign_id = id;
    config.out_dir = out;
    config.n = n;
    config.seed = 42;
    config.load_settle_s = 0.0;
    config.tolerance = Tolerance{0.01};
    return config;
}

// Deterministic scripted adapter for failure-path tests.
class ScriptedAdapter final : public SimulatorAdapter {
  public:
    explicit ScriptedAdapter(std::set<std::size_t> failing) : failing_(std::move(failing)) {}

    std::string kind() const override { return "scripted"; }
    std::string scenario_id() const override { return "scripted"; }

    RunTrace run_once(const RunRequest& req) override {
        if (failing_.contains(req.run_index)) {
            throw OrchestrateError("scripted failure for run " + std::to_string(req.run_index));
        }
        RunTrace t;
        t.scenario_id = "scripted";
        t.seed = req.seed;
        t.dt_physics = 0.05;
        t.log_interval = 0.1;
        t.samples.push_back({0.0, "a", {0, 0, 0}, Event::none()});
        t.samples.push_back({0.1, "a", {1, 0, 0}, Event::none()});
        return t;
    }

    void archive_scenario(const fs::path& path) const override {
        std::ofstream f(path);
        f << "scripted\n";
    }

  private:
    std::set<std::size_t> failing_;
};

}  // namespace

TEST_CASE("run_repeats: fixed seed, metadata, stored traces, manifest") {
    const fs::path out = test_dir("run_repeats");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    const CampaignConfig config = small_config("rr", out, 4);

    const CampaignResult result = run_repeats(adapter, config);
    CHECK(result.runs.n() == 4);
    CHECK(result.failures.empty());

    std::set<std::uint64_t> seeds;
    for (const RunTrace& run : result.runs.runs) {
        seeds.insert(run.seed);
        CHECK(run.metadata.at("util_target") == "0");
        CHECK(run.metadata.count("util_observed") == 1);
        CHECK(run.metadata.at("priority") == "0");
        CHECK(run.metadata.count("wall_clock_s") == 1);
    }
    CHECK(seeds == std::set<std::uint64_t>{42});  // fixed_single_seed

    for (int k = 0; k < 4; ++k) {
        CHECK(fs::exists(out / "rr" / "runs" / (std::to_string(k) + ".trace")));
    }
    CHECK(fs::exists(out / "rr" / "scenario.scn"));
    CHECK(fs::exists(out / "rr" / "manifest"));

    const CampaignManifest manifest = read_manifest(out / "rr");
    CHECK(manifest.scenario_id == "test5");
    CHECK(manifest.adapter_kind == "embedded");
    CHECK(manifest.tolerance.value == 0.01);

    const RunSet loaded = load_campaign(out / "rr");
    CHECK(loaded.n() == 4);
    CHECK(trace_body_bytes(loaded.runs[0]) == trace_body_bytes(result.runs.runs[0]));
}

TEST_CASE("run_repeats: per-run seed policy increments from the base") {
    const fs::path out = test_dir("per_run_seed");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    CampaignConfig config = small_config("prs", out, 3);
    config.seed_policy = SeedPolicy::per_run_seed;
    config.seed = 100;
    const CampaignResult result = run_repeats(adapter, config);
    std::set<std::uint64_t> seeds;
    for (const RunTrace& run : result.runs.runs) seeds.insert(run.seed);
    CHECK(seeds == std::set<std::uint64_t>{100, 101, 102});
}

TEST_CASE("run_repeats: sequential runs have disjoint timestamps") {
    const fs::path out = test_dir("seq");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    const CampaignResult result = run_repeats(adapter, small_config("seq", out, 3));
    long long prev_end = -1;
    for (const RunTrace& run : result.runs.runs) {
        const long long start = std::stoll(run.metadata.at("run_started_unix_ms"));
        const long long end = std::stoll(run.metadata.at("run_finished_unix_ms"));
        CHECK(start >= prev_end);
        CHECK(end >= start);
        prev_end = end;
        CHECK(run.metadata.count("utilization_invalid") == 0);
    }
}

TEST_CASE("run_repeats: parallel mode flags utilization as invalid") {
    const fs::path out = test_dir("par");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    CampaignConfig config = small_config("par", out, 4);
    config.parallel = true;
    const CampaignResult result = run_repeats(adapter, config);
    CHECK(result.runs.n() == 4);
    for (const RunTrace& run : result.runs.runs) {
        CHECK(run.metadata.at("utilization_invalid") == "true");
    }
    // Still byte-identical and ordered by run index.
    for (const RunTrace& run : result.runs.runs) {
        CHECK(trace_body_bytes(run) == trace_body_bytes(result.runs.runs[0]));
    }
}

TEST_CASE("failed external run is recorded with stderr captured") {
    const fs::path out = test_dir("extfail");
    const fs::path scn = out / "s.scn";
    minisim::write_scenario_file(minisim::catalog_scenario("test5"), scn.string());

    // 100 runs tolerate a single failure (1%); run 3 fails.
    const std::string cmd = "if [ {seed} -eq 45 ]; then echo boom >&2; exit 1; fi; "
                            "simvar_unused={scenario_file}; cp " +
                            (out / "template.trace").string() + " {out_trace}";
    {
        RunTrace t;
        t.scenario_id = "test5";
        t.seed = 0;
        t.dt_physics = 0.05;
        t.log_interval = 0.1;
        t.samples.push_back({0.0, "a", {0, 0, 0}, Event::none()});
        write_trace_file(t, (out / "template.trace").string());
    }

    ExternalAdapter adapter(cmd, scn, "test5");
    CampaignConfig config = small_config("extfail", out, 100);
    config.seed_policy = SeedPolicy::per_run_seed;
    config.seed = 42;  // run 3 gets seed 45

    const CampaignResult result = run_repeats(adapter, config);
    CHECK(result.runs.n() == 99);
    REQUIRE(result.failures.size() == 1);
    CHECK(result.failures[0].index == 3);
    CHECK(result.failures[0].message.find("boom") != std::string::npos);
    CHECK(fs::exists(out / "extfail" / "runs" / "3.failed"));
}

TEST_CASE("campaign aborts once failures exceed 1 percent") {
    const fs::path out = test_dir("abort");
    ScriptedAdapter adapter({1, 2});
    const CampaignConfig config = small_config("abort", out, 100);
    CHECK_THROWS_AS(run_repeats(adapter, config), OrchestrateError);
}

TEST_CASE("external adapter timeout kills the child") {
    const fs::path out = test_dir("timeout");
    const fs::path scn = out / "s.scn";
    minisim::write_scenario_file(minisim::catalog_scenario("test5"), scn.string());
    ExternalAdapter adapter("sleep 30; touch {out_trace}", scn, "test5", 0.3);
    RunRequest req;
    req.run_index = 0;
    req.seed = 1;
    req.out_trace_path = out / "t.trace";
    req.timeout_s = 0.3;
    CHECK_THROWS_AS(adapter.run_once(req), OrchestrateError);
}

TEST_CASE("external adapter round-trips through the simvar CLI-style command") {
    // The embedded simulator invoked through a shell pipeline exercises the
    // full external contract against our own trace format.
    const fs::path out = test_dir("extok");
    const fs::path scn = out / "s.scn";
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test5");
    minisim::write_scenario_file(spec, scn.string());

    // Stand-in external simulator: copy a pre-made trace into place.
    EmbeddedAdapter embedded(spec);
    RunRequest direct;
    direct.run_index = 0;
    direct.seed = 42;
    const RunTrace reference = embedded.run_once(direct);
    write_trace_file(reference, (out / "ext.trace").string());

    ExternalAdapter adapter("cp " + (out / "ext.trace").string() + " {out_trace}", scn, "test5");
    RunRequest req;
    req.run_index = 0;
    req.seed = 42;
    req.out_trace_path = out / "got.trace";
    const RunTrace got = adapter.run_once(req);
    CHECK(trace_body_bytes(got) == trace_body_bytes(reference));
}

TEST_CASE("sweep_utilization: one factor per row, boundary on the embedded sim") {
    const fs::path out = test_dir("sweep");
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test1");
    spec.injectors.entropy_seed = 4242;  // enables per-run derivation
    EmbeddedAdapter adapter(spec);

    CampaignConfig base = small_config("sw", out, 5);
    base.jitter_under_load = JitterUnderLoad{75.0, 0.5};

    const SweepResult sweep = sweep_utilization(adapter, base, {0.0, 25.0, 75.0, 95.0});
    REQUIRE(sweep.rows.size() == 4);

    // Injector-free below the contention threshold: permissible there, and
    // the fixture makes 95% non-permissible.
    CHECK(sweep.rows[0].audit.verdict == Verdict::permissible);
    CHECK(sweep.rows[1].audit.verdict == Verdict::permissible);
    CHECK(sweep.rows[2].audit.verdict == Verdict::permissible);
    CHECK(sweep.rows[3].audit.verdict == Verdict::non_permissible);
    REQUIRE(sweep.domain_boundary.has_value());
    CHECK(*sweep.domain_boundary == 75.0);

    // One-factor-at-a-time discipline: rows differ in the load level only.
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
        const auto diff = config_diff(sweep.rows[0].config, sweep.rows[i].config);
        REQUIRE(diff.size() == 1);
        CHECK(diff[0] == "load.cpu_percent");
    }
}

TEST_CASE("sweep_priority: higher priority no worse than lower under the fixture") {
    const fs::path out = test_dir("sweep_prio");
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test1");
    spec.injectors.entropy_seed = 515;
    EmbeddedAdapter adapter(spec);

    CampaignConfig base = small_config("swp", out, 5);
    base.load.cpu_percent = 75.0;
    base.load_settle_s = 0.0;
    base.jitter_under_load = JitterUnderLoad{75.0, 0.5};

    const SweepResult sweep = sweep_priority(adapter, base, {-20, 0, 19});
    REQUIRE(sweep.rows.size() == 3);
    CHECK(sweep.axis == SweepAxis::priority);
    const double high_prio = sweep.rows[0].audit.max_deviation;  // nice -20
    const double low_prio = sweep.rows[2].audit.max_deviation;   // nice +19
    CHECK(high_prio <= low_prio);
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
        const auto diff = config_diff(sweep.rows[0].config, sweep.rows[i].config);
        REQUIRE(diff.size() == 1);
        CHECK(diff[0] == "priority");
    }
}

TEST_CASE("sweep rejects unsorted levels") {
    const fs::path out = test_dir("sweep_bad");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    const CampaignConfig base = small_config("swb", out, 2);
    CHECK_THROWS_AS(sweep_utilization(adapter, base, {50.0, 0.0}), OrchestrateError);
    CHECK_THROWS_AS(sweep_utilization(adapter, base, {}), OrchestrateError);
}

TEST_CASE("escalate: deterministic violation stops at the first stage") {
    const fs::path out = test_dir("esc_stop");
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test1");
    spec.injectors.timestep_jitter = true;
    spec.injectors.timestep_jitter_probability = 0.5;  // fires practically every run
    spec.injectors.entropy_seed = 606;
    EmbeddedAdapter adapter(spec);

    CampaignConfig config = small_config("esc-stop", out, 2);
    const EscalationResult res = escalate_sample_size(adapter, config, Tolerance{0.01}, 1000);
    CHECK(res.n_final == 10);
    CHECK(res.stages == std::vector<std::size_t>{10});
    CHECK(res.audit.verdict == Verdict::non_permissible);
}

TEST_CASE("escalate: clean scenario escalates to max_n and stays permissible") {
    const fs::path out = test_dir("esc_clean");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    CampaignConfig config = small_config("esc-clean", out, 2);
    const EscalationResult res = escalate_sample_size(adapter, config, Tolerance{0.01}, 120);
    CHECK(res.n_final == 120);
    CHECK(res.stages == std::vector<std::size_t>{10, 100, 120});
    CHECK(res.audit.verdict == Verdict::permissible);
    CHECK(res.audit.psi == 0.0);
    CHECK(res.audit.n == 120);
}

TEST_CASE("escalate validates max_n") {
    const fs::path out = test_dir("esc_bad");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    const CampaignConfig config = small_config("esc-bad", out, 2);
    CHECK_THROWS_AS(escalate_sample_size(adapter, config, Tolerance{0.01}, 5), OrchestrateError);
}

TEST_CASE("splitmix64 derivation is deterministic and spreads runs") {
    CHECK(splitmix64(1) == splitmix64(1));
    CHECK(splitmix64(1) != splitmix64(2));
    std::set<std::uint64_t> values;
    for (std::uint64_t k = 0; k < 100; ++k) values.insert(splitmix64(42 + k));
    CHECK(values.size() == 100);
}

TEST_CASE("environment restoration: no load workers survive a campaign") {
    const fs::path out = test_dir("env");
    EmbeddedAdapter adapter(minisim::catalog_scenario("test5"));
    CampaignConfig config = small_config("env", out, 2);
    config.load.cpu_percent = 40.0;
    config.load_settle_s = 0.1;
    run_repeats(adapter, config);
    // After run_repeats returns, its LoadGenerator has been destroyed; a new
    // one can claim the host immediately (would throw if its handle survived).
    loadgen::LoadGenerator probe;
    probe.start(loadgen::LoadTarget{10.0, std::nullopt, 1});
    probe.stop();
}
