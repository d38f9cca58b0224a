#include "simvar/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "simvar/catalog.hpp"
#include "simvar/loadgen.hpp"
#include "simvar/metrics.hpp"
#include "simvar/orchestrate.hpp"
#include "simvar/report.hpp"
#include "simvar/scenario_io.hpp"
#include "simvar/trace.hpp"

namespace simvar::selftest {

namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

struct CheckContext {
    Options options;
    std::vector<CheckResult>* results = nullptr;
    std::ostream* out = nullptr;
};

void run_check(CheckContext& ctx, const std::string& name,
               const std::function<std::string()>& body) {
    CheckResult result;
    result.name = name;
    try {
        result.detail = body();
        result.passed = true;
        if (result.detail.rfind("SKIP:", 0) == 0) {
            result.skipped = true;
            result.detail = result.detail.substr(5);
        }
    } catch (const std::exception& e) {
        result.passed = false;
        result.detail = e.what();
    }
    const char* tag = result.skipped ? "SKIP" : (result.passed ? "PASS" : "FAIL");
    (*ctx.out) << "[" << tag << "] " << name << " — " << result.detail << "\n";
    ctx.out->flush();
    ctx.results->push_back(std::move(result));
}

[[noreturn]] void check_failed(const std::string& what) { throw std::runtime_error(what); }

void require(bool cond, const std::string& what) {
    if (!cond) check_failed(what);
}

std::string fmt(double v) { return format_double(v); }

orchestrate::CampaignConfig base_config(const CheckContext& ctx, const std::string& id,
                                        std::size_t n) {
    orchestrate::CampaignConfig config;
    config.config_id = id;
    config.campaign_id = id;
    config.out_dir = ctx.options.work_dir;
    config.n = n;
    config.seed = 42;
    config.load_settle_s = 0.0;
    config.tolerance = Tolerance{0.01};
    return config;
}

RunSet run_embedded(const CheckContext& ctx, const minisim::ScenarioSpec& spec,
                    const std::string& campaign_id, std::size_t n, double load_pct = 0.0,
                    double settle_s = 0.0) {
    orchestrate::EmbeddedAdapter adapter(spec);
    orchestrate::CampaignConfig config = base_config(ctx, campaign_id, n);
    config.load.cpu_percent = load_pct;
    config.load_settle_s = settle_s;
    return orchestrate::run_repeats(adapter, config).runs;
}

// ---- synthetic run sets and the exhaustive oracle (check 2) ----

RunSet random_run_set(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> n_runs(2, 5);
    std::uniform_int_distribution<int> n_actors(1, 3);
    std::uniform_int_distribution<int> n_times(1, 100);
    std::uniform_real_distribution<double> coord(-100.0, 100.0);
    std::uniform_real_distribution<double> jiggle(-0.5, 0.5);

    RunSet rs;
    rs.scenario_id = "synthetic";
    rs.config_id = "oracle";
    const int runs = n_runs(rng);
    const int actors = n_actors(rng);
    const int times = n_times(rng);

    std::vector<Position> base(static_cast<std::size_t>(actors) * times);
    for (Position& p : base) p = Position{coord(rng), coord(rng), coord(rng)};

    for (int r = 0; r < runs; ++r) {
        RunTrace trace;
        trace.run_id = "run" + std::to_string(r);
        trace.scenario_id = rs.scenario_id;
        trace.seed = 42;
        trace.dt_physics = 0.05;
        trace.log_interval = 0.1;
        for (int t = 0; t < times; ++t) {
            for (int a = 0; a < actors; ++a) {
                TraceSample s;
                s.t = t * 0.1;
                s.actor_id = "actor" + std::to_string(a);
                const Position& b = base[static_cast<std::size_t>(a) * times + t];
                s.position = Position{b.x + jiggle(rng), b.y + jiggle(rng), b.z + jiggle(rng)};
                trace.samples.push_back(std::move(s));
            }
        }
        rs.runs.push_back(std::move(trace));
    }
    return rs;
}

// Independent of align()/variance_at(): direct grouping plus a naive
// long-double two-pass.
double brute_force_psi(const RunSet& rs) {
    std::map<std::pair<std::string, double>, std::vector<Position>> groups;
    for (const RunTrace& run : rs.runs) {
        for (const TraceSample& s : run.samples) {
            groups[{s.actor_id, s.t}].push_back(s.position);
        }
    }
    long double best = 0.0L;
    bool found = false;
    for (const auto& [key, positions] : groups) {
        if (positions.size() < 2) continue;
        const long double n = static_cast<long double>(positions.size());
        long double mx = 0.0L, my = 0.0L, mz = 0.0L;
        for (const Position& p : positions) {
            mx += p.x;
            my += p.y;
            mz += p.z;
        }
        mx /= n;
        my /= n;
        mz /= n;
        long double ssq = 0.0L;
        for (const Position& p : positions) {
            const long double dx = p.x - mx, dy = p.y - my, dz = p.z - mz;
            ssq += dx * dx + dy * dy + dz * dz;
        }
        const long double var = ssq / n;
        if (!found || var > best) best = var;
        found = true;
    }
    require(found, "oracle found no usable (actor, time) pair");
    return static_cast<double>(best);
}

double post_collision_max_deviation(const RunSet& rs) {
    const PrePostSplit split = segment_pre_post(rs, Tolerance{0.01});
    return split.post.max_deviation;
}

// ---- individual checks ----

std::string check_bit_determinism(CheckContext& ctx) {
    const auto start = steady_clock::now();
    for (const std::string& id : minisim::catalog_ids()) {
        for (double load : {0.0, 75.0}) {
            const minisim::ScenarioSpec spec = minisim::catalog_scenario(id);
            require(!spec.injectors.any_enabled(), id + ": catalog scenario has injectors on");
            const std::string campaign =
                "c1-" + id + "-u" + std::to_string(static_cast<int>(load));
            const RunSet rs =
                run_embedded(ctx, spec, campaign, 100, load, load > 0.0 ? 0.5 : 0.0);
            require(rs.n() == 100, id + ": expected 100 runs");
            const std::string reference = trace_body_bytes(rs.runs.front());
            for (const RunTrace& run : rs.runs) {
                require(trace_body_bytes(run) == reference,
                        id + " at " + fmt(load) + "%: traces not byte-identical");
            }
            const MaxVariance mv = max_variance(rs);
            require(mv.psi == 0.0, id + ": psi not exactly 0");
        }
    }
    const double elapsed = duration<double>(steady_clock::now() - start).count();
    require(elapsed < 120.0, "runtime " + fmt(elapsed) + " s exceeds 2 min");
    return "6 scenarios x {0,75}% x 100 runs byte-identical, psi=0, " + fmt(elapsed) + " s";
}

std::string check_oracle_equivalence(CheckContext&) {
    std::mt19937_64 rng(20240811);
    double worst_rel = 0.0;
    for (int i = 0; i < 50; ++i) {
        const RunSet rs = random_run_set(rng);
        const double expected = brute_force_psi(rs);
        const double actual = max_variance(rs).psi;
        const double rel = expected == 0.0 ? std::abs(actual)
                                           : std::abs(actual - expected) / expected;
        worst_rel = std::max(worst_rel, rel);
        require(rel <= 1e-12, "run set " + std::to_string(i) + ": relative error " + fmt(rel));
    }
    return "50 randomized run sets, worst relative error " + fmt(worst_rel);
}

std::string check_hand_values(CheckContext&) {
    const std::vector<Position> positions{{0, 0, 0}, {0, 0, 0}, {0, 0.03, 0}};
    const double var = variance_at(positions);
    // 2.0e-4 up to binary64 rounding: the stored 0.03 is not exactly 0.03, so
    // bit-exact equality with the decimal hand value is impossible; 2 ulp
    // covers the correctly rounded result.
    const double ulp2 = 2.0 * (std::nextafter(2.0e-4, 1.0) - 2.0e-4);
    require(std::abs(var - 2.0e-4) <= ulp2,
            "variance " + fmt(var) + " not within 2 ulp of 2.0e-4");
    const double dev = std::sqrt(var);
    require(std::abs(dev - 0.0141421356) <= 1e-9, "deviation " + fmt(dev) + " off by > 1e-9");
    return "variance=" + fmt(var) + ", deviation=" + fmt(dev);
}

std::string check_gate_fixtures(CheckContext&) {
    const Tolerance tol{0.01};
    require(gate(0.59, tol) == Verdict::non_permissible, "0.59 m should be non-permissible");
    require(gate(5.6e-13, tol) == Verdict::permissible, "5.6e-13 m should be permissible");
    require(gate(0.01, tol) == Verdict::permissible, "boundary 0.01 m should be permissible");
    return "0.59 m -> non_permissible, 5.6e-13 m -> permissible";
}

minisim::ScenarioSpec jitter_scenario(const std::string& id, double epsilon,
                                      std::uint64_t entropy) {
    minisim::ScenarioSpec spec = minisim::catalog_scenario(id);
    spec.stop_on_collision = false;
    spec.injectors.collision_impulse_jitter = epsilon;
    spec.injectors.entropy_seed = entropy;
    return spec;
}

std::string check_pre_post_shape(CheckContext& ctx) {
    const auto start = steady_clock::now();
    std::string detail;
    for (const std::string& id : {std::string("test2"), std::string("test4")}) {
        const minisim::ScenarioSpec spec = jitter_scenario(id, 1e-2, 1001);
        const RunSet rs = run_embedded(ctx, spec, "c5-" + id, 100);
        const PrePostSplit split = segment_pre_post(rs, Tolerance{0.01});

        // The split must equal the earliest collision logged in any run.
        double earliest = std::numeric_limits<double>::infinity();
        for (const RunTrace& run : rs.runs) {
            for (const TraceSample& s : run.samples) {
                if (s.event.kind == EventKind::collision) {
                    earliest = std::min(earliest, s.t);
                    break;
                }
            }
        }
        require(split.t_split == earliest, id + ": t_split != earliest logged collision");
        require(split.pre.max_deviation == 0.0,
                id + ": pre-collision maxsigma " + fmt(split.pre.max_deviation) + " != 0");
        require(split.post.max_deviation > 0.01,
                id + ": post-collision maxsigma " + fmt(split.post.max_deviation) + " <= 0.01");
        detail += id + " pre=0 post=" + fmt(split.post.max_deviation) + " t_split=" +
                  fmt(split.t_split) + "; ";
    }
    const double elapsed = duration<double>(steady_clock::now() - start).count();
    require(elapsed < 60.0, "runtime " + fmt(elapsed) + " s exceeds 1 min");
    return detail + fmt(elapsed) + " s";
}

std::string check_delayed_contamination(CheckContext& ctx) {
    const minisim::ScenarioSpec spec = jitter_scenario("test4", 1e-2, 2002);
    const RunSet rs = run_embedded(ctx, spec, "c6-test4", 100);
    const auto t_split = earliest_collision_time(rs);
    require(t_split.has_value(), "test4 produced no collision");

    const DeviationSeries car1 = deviation_series(rs, "car1");
    require(!car1.entries.empty(), "car1 has no usable samples");
    double max_pre = 0.0;
    double max_post = 0.0;
    for (const DeviationEntry& e : car1.entries) {
        if (e.t <= *t_split) {
            max_pre = std::max(max_pre, e.deviation);
        } else {
            max_post = std::max(max_post, e.deviation);
        }
    }
    require(max_pre == 0.0, "non-colliding car1 deviates before the collision: " + fmt(max_pre));
    require(max_post > 0.0, "non-colliding car1 never deviates after the collision");
    return "car1 deviation 0 through t_split=" + fmt(*t_split) + ", then up to " + fmt(max_post);
}

// Single 90-degree crossing collision with a smooth recovery: deviation
// scales with the jitter amplitude instead of saturating the way the head-on
// catalog scenario's U-turn bifurcation does.
minisim::ScenarioSpec smooth_crossing_scenario() {
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test2");
    spec.actors.clear();
    minisim::ActorSpec a;
    a.actor_id = "car1";
    a.kind = minisim::ActorKind::vehicle;
    a.start = {12, 15, 0};
    a.waypoints = {{12, 15, 0}, {48, 15, 0}};
    a.cruise_speed = 3.0;
    a.radius = 1.0;
    minisim::ActorSpec b = a;
    b.actor_id = "car2";
    b.start = {25, 2, 0};
    b.waypoints = {{25, 2, 0}, {25, 28, 0}};
    spec.actors = {a, b};
    spec.scenario_id = "crossing";
    return spec;
}

std::string check_injector_monotonicity(CheckContext& ctx) {
    double previous = -1.0;
    std::string detail;
    for (double epsilon : {0.0, 1e-4, 1e-2}) {
        minisim::ScenarioSpec spec = smooth_crossing_scenario();
        spec.stop_on_collision = false;
        spec.injectors.collision_impulse_jitter = epsilon;
        spec.injectors.entropy_seed = 3003;  // same entropy stream at every epsilon
        const std::string campaign = "c7-eps" + fmt(epsilon);
        const RunSet rs = run_embedded(ctx, spec, campaign, 100);
        const double post = post_collision_max_deviation(rs);
        require(post >= previous, "post maxsigma decreased at epsilon=" + fmt(epsilon));
        previous = post;
        detail += "eps=" + fmt(epsilon) + "->" + fmt(post) + " ";
    }
    return detail;
}

std::string check_astar_tiebreak(CheckContext&) {
    const minisim::TwoRouteFixture fx = minisim::two_route_fixture();

    std::vector<minisim::GridCell> reference;
    for (int i = 0; i < 1000; ++i) {
        std::mt19937_64 rng(static_cast<std::uint64_t>(i));  // re-seeded every call
        const auto path = find_grid_path(fx.mesh, fx.start, fx.goal,
                                         minisim::FrontierMode::stable_insertion_order, rng);
        if (i == 0) {
            reference = path;
            require(minisim::two_route_signature(path) != 0, "stable path has no signature");
        } else {
            require(path == reference, "stable mode returned a different route on call " +
                                           std::to_string(i));
        }
    }

    std::set<int> signatures;
    std::mt19937_64 rng(4004);
    for (int i = 0; i < 1000; ++i) {
        const auto path = find_grid_path(fx.mesh, fx.start, fx.goal,
                                         minisim::FrontierMode::random_tiebreak, rng);
        const int sig = minisim::two_route_signature(path);
        require(sig != 0, "random tiebreak path has no signature");
        signatures.insert(sig);
    }
    require(signatures.size() >= 2, "random tiebreak never explored the second route");
    return "stable 1000/1000 identical; random explored " + std::to_string(signatures.size()) +
           " routes";
}

std::string check_sample_size_escalation(CheckContext& ctx) {
    // Rare-event injector: one dropped/duplicated sub-step somewhere in a run,
    // at 0.003 probability per run. Small samples usually look permissible;
    // n=1000 almost surely catches it. The per-tick probability is calibrated
    // against the scenario's actual tick count (it terminates before
    // max_sim_time when the vehicles reach their goals).
    minisim::ScenarioSpec spec = minisim::catalog_scenario("test1");
    const RunTrace probe = minisim::simulate(spec, 42);
    const double ticks = std::round(probe.samples.back().t / spec.log_interval);
    require(ticks > 0, "probe run has no ticks");
    spec.injectors.timestep_jitter = true;
    spec.injectors.timestep_jitter_probability = 1.0 - std::pow(1.0 - 0.003, 1.0 / ticks);

    for (int attempt = 0; attempt < 3; ++attempt) {
        spec.injectors.entropy_seed = 5005 + static_cast<std::uint64_t>(attempt) * 7919;
        orchestrate::EmbeddedAdapter adapter(spec);
        orchestrate::CampaignConfig config =
            base_config(ctx, "c9-attempt" + std::to_string(attempt), 1000);
        const orchestrate::EscalationResult res =
            orchestrate::escalate_sample_size(adapter, config, Tolerance{0.01}, 1000);

        const bool stage10_permissible = res.stages.size() > 1;  // did not stop at n=10
        const bool final_non_permissible = res.audit.verdict == Verdict::non_permissible;
        if (stage10_permissible && final_non_permissible) {
            return "attempt " + std::to_string(attempt) + ": permissible at n=10, " +
                   "non-permissible at n=" + std::to_string(res.n_final) +
                   " (maxsigma=" + fmt(res.audit.max_deviation) + ")";
        }
    }
    check_failed("no attempt showed permissible@10 then non-permissible@1000 (3 tries)");
}

std::string check_load_controller(CheckContext& ctx) {
    if (!ctx.options.run_load_checks || std::getenv("SIMVAR_SKIP_LOAD_TEST") != nullptr) {
        return "SKIP:disabled (environment-sensitive)";
    }
    const double baseline = loadgen::sample_utilization(milliseconds(1000)).cpu_percent_observed;
    if (baseline > 15.0) {
        return "SKIP:busy host (baseline " + fmt(baseline) + "%)";
    }
    std::string detail = "baseline " + fmt(baseline) + "%; ";
    for (double target : {25.0, 50.0, 75.0}) {
        loadgen::LoadGenerator load;
        load.start(loadgen::LoadTarget{target, std::nullopt, 0});
        std::this_thread::sleep_for(milliseconds(5000));
        const double observed =
            loadgen::sample_utilization(milliseconds(2000)).cpu_percent_observed;
        load.stop();
        require(std::abs(observed - target) <= 10.0,
                "target " + fmt(target) + "% observed " + fmt(observed) + "% (off > 10 points)");
        detail += fmt(target) + "->" + fmt(observed) + "% ";
    }
    std::this_thread::sleep_for(milliseconds(3000));
    const double after = loadgen::sample_utilization(milliseconds(2000)).cpu_percent_observed;
    require(std::abs(after - baseline) <= 10.0,
            "utilization did not return to baseline: " + fmt(after) + "%");
    return detail + "restored to " + fmt(after) + "%";
}

std::string check_report_reproducibility(CheckContext& ctx) {
    // Fixture campaigns: collision scenarios with impulse jitter at two levels.
    std::vector<report::ResultCell> cells;
    std::vector<fs::path> dirs;
    for (const std::string& id : {std::string("test2"), std::string("test4")}) {
        for (double level : {0.0, 75.0}) {
            const minisim::ScenarioSpec spec = jitter_scenario(id, 1e-2, 6006);
            const std::string campaign =
                "c11-" + id + "-u" + std::to_string(static_cast<int>(level));
            run_embedded(ctx, spec, campaign, 30, level, level > 0.0 ? 0.5 : 0.0);
            dirs.push_back(ctx.options.work_dir / campaign);
        }
    }

    auto analyze_all = [&]() {
        std::vector<report::ResultCell> out;
        for (const fs::path& dir : dirs) {
            const orchestrate::CampaignManifest manifest = orchestrate::read_manifest(dir);
            const RunSet rs = orchestrate::load_campaign(dir);
            report::ResultCell cell;
            cell.scenario_id = rs.scenario_id;
            cell.level_pct = parse_double(manifest.fields.at("load_cpu_percent"));
            cell.audit = audit(rs, manifest.tolerance);
            cell.campaign_id = manifest.campaign_id;
            out.push_back(std::move(cell));
        }
        return out;
    };

    const std::vector<double> levels{0.0, 75.0};
    const report::RestrictionPolicy policy{75.0, true};

    cells = analyze_all();
    const report::DomainReport rep1 =
        report::build_table(cells, policy, Tolerance{0.01}, levels);
    const std::string text1 = report::render_text(rep1);

    const std::vector<report::ResultCell> cells2 = analyze_all();
    const report::DomainReport rep2 =
        report::build_table(cells2, policy, Tolerance{0.01}, levels);
    const std::string text2 = report::render_text(rep2);
    require(text1 == text2, "re-running analyze+report changed the report bytes");

    // Series CSVs must be byte-identical across re-runs too.
    for (int pass = 0; pass < 2; ++pass) {
        const fs::path dir = ctx.options.work_dir / ("c11-series-" + std::to_string(pass));
        report::emit_series_csv(cells[0].audit, dir);
    }
    for (const auto& entry :
         fs::directory_iterator(ctx.options.work_dir / "c11-series-0")) {
        const fs::path other = ctx.options.work_dir / "c11-series-1" / entry.path().filename();
        std::ifstream a(entry.path(), std::ios::binary), b(other, std::ios::binary);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        require(sa.str() == sb.str(), "series CSV differs across re-runs");
    }

    for (const report::DomainRow& row : rep1.rows) {
        require(row.max_deviation_unrestricted && row.max_deviation_restricted,
                row.scenario_id + ": unexpected gap");
        require(*row.max_deviation_restricted <= *row.max_deviation_unrestricted,
                row.scenario_id + ": restricted > unrestricted");
        require(*row.max_deviation_restricted <= 0.01,
                row.scenario_id + ": restricted " + fmt(*row.max_deviation_restricted) +
                    " > 0.01 m");
        require(*row.max_deviation_unrestricted > 0.01,
                row.scenario_id + ": collision fixture should be non-permissible unrestricted");
    }
    return "byte-identical report + CSVs; restricted <= 0.01 m <= unrestricted on " +
           std::to_string(rep1.rows.size()) + " rows";
}

}  // namespace

std::vector<CheckResult> run_all(const Options& options, std::ostream& out) {
    std::vector<CheckResult> results;
    CheckContext ctx{options, &results, &out};
    fs::create_directories(options.work_dir);

    run_check(ctx, "bit-determinism baseline", [&] { return check_bit_determinism(ctx); });
    run_check(ctx, "metrics oracle equivalence", [&] { return check_oracle_equivalence(ctx); });
    run_check(ctx, "hand-value variance", [&] { return check_hand_values(ctx); });
    run_check(ctx, "gating fixtures", [&] { return check_gate_fixtures(ctx); });
    run_check(ctx, "pre/post-collision shape", [&] { return check_pre_post_shape(ctx); });
    run_check(ctx, "delayed contamination", [&] { return check_delayed_contamination(ctx); });
    run_check(ctx, "injector monotonicity", [&] { return check_injector_monotonicity(ctx); });
    run_check(ctx, "A* tie-breaking", [&] { return check_astar_tiebreak(ctx); });
    run_check(ctx, "sample-size escalation", [&] { return check_sample_size_escalation(ctx); });
    run_check(ctx, "load controller accuracy", [&] { return check_load_controller(ctx); });
    run_check(ctx, "report reproducibility", [&] { return check_report_reproducibility(ctx); });
    return results;
}

int exit_code(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results) {
        if (!r.passed && !r.skipped) return 2;
    }
    return 0;
}

}  // namespace simvar::selftest
