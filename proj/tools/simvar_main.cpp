// simvar — determinism audit toolkit for simulation environments.
//
// Workflow: design the scenario (catalog id or file), pin simulator settings,
// control the external environment (load, priority, pinning), execute
// repeated runs, analyze maxima against the tolerance.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "simvar/catalog.hpp"
#include "simvar/loadgen.hpp"
#include "simvar/metrics.hpp"
#include "simvar/orchestrate.hpp"
#include "simvar/report.hpp"
#include "simvar/scenario_io.hpp"
#include "simvar/selftest.hpp"
#include "simvar/trace.hpp"
#include "simvar/version.hpp"

namespace fs = std::filesystem;
using namespace simvar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitGate = 2;
constexpr int kExitEnvironment = 3;

struct CommonArgs {
    std::string scenario;
    std::size_t n = 100;
    std::uint64_t seed = 42;
    double load = 0.0;
    int priority = 0;
    std::vector<int> pin;
    double tolerance = 0.01;
    bool stop_on_collision = false;
    std::string adapter_cmd;
    std::string campaign;
    std::string out_dir = "campaigns";
    bool parallel = false;
    bool per_run_seed = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool needs_scenario) {
    auto* scenario =
        cmd->add_option("--scenario", args.scenario, "catalog id (test1..test6) or scenario file");
    if (needs_scenario) scenario->required();
    cmd->add_option("--n", args.n, "number of repeated runs");
    cmd->add_option("--seed", args.seed, "simulation seed (fixed across repeats)");
    cmd->add_flag("--per-run-seed", args.per_run_seed,
                  "vary the seed per run (base + index) instead of fixing it");
    cmd->add_option("--load", args.load, "target CPU utilization percent")
        ->check(CLI::Range(0.0, 100.0));
    cmd->add_option("--priority", args.priority, "nice offset for the simulator process")
        ->check(CLI::Range(-20, 19));
    cmd->add_option("--pin", args.pin, "cores to pin the simulator to")->delimiter(',');
    cmd->add_option("--tolerance", args.tolerance, "permissible deviation in meters");
    cmd->add_flag("--stop-on-collision", args.stop_on_collision,
                  "terminate runs at the first collision");
    cmd->add_option("--adapter", args.adapter_cmd,
                    "external simulator command with {scenario_file} {seed} {out_trace}");
    cmd->add_option("--campaign", args.campaign, "campaign id (directory name)");
    cmd->add_option("--out", args.out_dir, "base output directory");
    cmd->add_flag("--parallel", args.parallel,
                  "run repeats in parallel (invalidates utilization control)");
}

std::string default_campaign_id(const std::string& prefix, const std::string& scenario_id) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    return prefix + "-" + scenario_id + "-" + std::to_string(ms);
}

// Resolves --scenario/--adapter into a simulator adapter. Catalog ids used
// with an external adapter are materialized as a scenario file first.
std::unique_ptr<orchestrate::SimulatorAdapter> make_adapter(const CommonArgs& args,
                                                            const fs::path& work_dir) {
    if (args.adapter_cmd.empty()) {
        minisim::ScenarioSpec spec = minisim::is_catalog_id(args.scenario)
                                         ? minisim::catalog_scenario(args.scenario)
                                         : minisim::parse_scenario_file(args.scenario);
        return std::make_unique<orchestrate::EmbeddedAdapter>(std::move(spec));
    }

    fs::path scenario_file;
    std::string scenario_id;
    if (minisim::is_catalog_id(args.scenario)) {
        const minisim::ScenarioSpec spec = minisim::catalog_scenario(args.scenario);
        fs::create_directories(work_dir);
        scenario_file = work_dir / (args.scenario + ".scn");
        minisim::write_scenario_file(spec, scenario_file.string());
        scenario_id = spec.scenario_id;
    } else {
        scenario_file = args.scenario;
        try {
            scenario_id = minisim::parse_scenario_file(scenario_file.string()).scenario_id;
        } catch (const minisim::ScenarioError&) {
            // Opaque foreign scenario: pass the file through untouched.
            scenario_id = scenario_file.stem().string();
            std::cerr << "simvar: note: scenario file is not simvar format; passing through\n";
        }
    }
    return std::make_unique<orchestrate::ExternalAdapter>(args.adapter_cmd, scenario_file,
                                                          scenario_id);
}

orchestrate::CampaignConfig make_config(const CommonArgs& args, const std::string& prefix,
                                        const std::string& scenario_id) {
    orchestrate::CampaignConfig config;
    config.config_id = args.campaign.empty() ? prefix + "-" + scenario_id : args.campaign;
    config.campaign_id =
        args.campaign.empty() ? default_campaign_id(prefix, scenario_id) : args.campaign;
    config.out_dir = args.out_dir;
    config.n = args.n;
    config.seed = args.seed;
    config.seed_policy = args.per_run_seed ? orchestrate::SeedPolicy::per_run_seed
                                           : orchestrate::SeedPolicy::fixed_single_seed;
    config.load.cpu_percent = args.load;
    if (const char* gpu = std::getenv("SIMVAR_GPU_LOAD_CMD"); gpu != nullptr && gpu[0] != '\0') {
        config.load.gpu_command = std::string(gpu);
    }
    config.priority = args.priority;
    config.pinning = args.pin;
    config.tolerance = Tolerance{args.tolerance};
    if (args.stop_on_collision) config.stop_on_collision = true;
    config.parallel = args.parallel;
    return config;
}

void print_defaults_header(std::ostream& out) {
    out << "# simvar " << kVersion
        << " defaults: dt_physics=0.05s log_interval=0.1s tolerance=0.01m levels=0-95%\n";
}

std::optional<double> load_noise_floor(const std::string& baseline_campaign,
                                       const std::string& out_dir) {
    if (baseline_campaign.empty()) return std::nullopt;
    const RunSet baseline = orchestrate::load_campaign(fs::path(out_dir) / baseline_campaign);
    return noise_floor(baseline);
}

int cmd_run(const CommonArgs& args, const std::string& baseline) {
    auto adapter = make_adapter(args, fs::path(args.out_dir) / "scenarios");
    const auto config = make_config(args, "run", adapter->scenario_id());
    const orchestrate::CampaignResult result = orchestrate::run_repeats(*adapter, config);

    const std::optional<double> floor = load_noise_floor(baseline, args.out_dir);
    const AuditResult audit_result = audit(result.runs, config.tolerance, floor);
    report::emit_series_csv(audit_result, result.dir / "analysis");

    print_defaults_header(std::cout);
    std::cout << "campaign_dir=" << result.dir.string() << '\n';
    std::cout << summary_text(audit_result);
    if (!result.failures.empty()) {
        std::cout << "failed_runs=" << result.failures.size() << '\n';
    }
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& axis,
              const std::vector<double>& levels) {
    if (levels.empty()) {
        std::cerr << "simvar: sweep requires --levels\n";
        return kExitUsage;
    }
    auto adapter = make_adapter(args, fs::path(args.out_dir) / "scenarios");
    orchestrate::CampaignConfig base = make_config(args, "sweep", adapter->scenario_id());

    orchestrate::SweepResult sweep;
    if (axis == "utilization") {
        sweep = orchestrate::sweep_utilization(*adapter, base, levels);
    } else if (axis == "priority") {
        std::vector<int> priorities;
        priorities.reserve(levels.size());
        for (double v : levels) priorities.push_back(static_cast<int>(v));
        sweep = orchestrate::sweep_priority(*adapter, base, priorities);
    } else {
        std::cerr << "simvar: unknown sweep axis '" << axis << "'\n";
        return kExitUsage;
    }

    const fs::path csv_path =
        fs::path(args.out_dir) / (base.campaign_id + "-sweep.csv");
    report::emit_sweep_csv_file(sweep, csv_path);

    print_defaults_header(std::cout);
    std::cout << "sweep_axis=" << axis << '\n';
    report::emit_sweep_csv(sweep, std::cout);
    if (sweep.domain_boundary) {
        std::cout << "domain_boundary=" << format_double(*sweep.domain_boundary) << '\n';
    } else {
        std::cout << "domain_boundary=none\n";
    }
    std::cout << "sweep_csv=" << csv_path.string() << '\n';
    return kExitOk;
}

int cmd_escalate(const CommonArgs& args) {
    auto adapter = make_adapter(args, fs::path(args.out_dir) / "scenarios");
    const auto config = make_config(args, "escalate", adapter->scenario_id());
    const orchestrate::EscalationResult result = orchestrate::escalate_sample_size(
        *adapter, config, Tolerance{args.tolerance}, args.n);

    print_defaults_header(std::cout);
    std::cout << "stages=";
    for (std::size_t i = 0; i < result.stages.size(); ++i) {
        std::cout << (i ? "," : "") << result.stages[i];
    }
    std::cout << '\n';
    std::cout << "n_final=" << result.n_final << '\n';
    std::cout << summary_text(result.audit);
    return kExitOk;
}

int cmd_analyze(const std::string& campaign, const std::string& out_dir,
                std::optional<double> tolerance_override, const std::string& baseline) {
    const fs::path dir = fs::path(out_dir) / campaign;
    const orchestrate::CampaignManifest manifest = orchestrate::read_manifest(dir);
    const RunSet rs = orchestrate::load_campaign(dir);
    const Tolerance tol =
        tolerance_override ? Tolerance{*tolerance_override} : manifest.tolerance;

    const std::optional<double> floor = load_noise_floor(baseline, out_dir);
    const AuditResult result = audit(rs, tol, floor);
    report::emit_series_csv(result, dir / "analysis");

    print_defaults_header(std::cout);
    std::cout << summary_text(result);
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& campaigns, const std::string& out_dir,
               double cap_pct, bool pre_collision_only, bool gate_mode,
               std::optional<double> tolerance_override, const std::string& baseline) {
    if (campaigns.empty()) {
        std::cerr << "simvar: report requires at least one --campaign\n";
        return kExitUsage;
    }
    std::vector<report::ResultCell> cells;
    std::set<double> levels;
    Tolerance tol{0.01};
    for (const std::string& campaign : campaigns) {
        const fs::path dir = fs::path(out_dir) / campaign;
        const orchestrate::CampaignManifest manifest = orchestrate::read_manifest(dir);
        const RunSet rs = orchestrate::load_campaign(dir);
        tol = tolerance_override ? Tolerance{*tolerance_override} : manifest.tolerance;

        report::ResultCell cell;
        cell.scenario_id = rs.scenario_id;
        cell.level_pct = manifest.fields.count("load_cpu_percent")
                             ? parse_double(manifest.fields.at("load_cpu_percent"))
                             : 0.0;
        cell.audit = audit(rs, tol);
        cell.campaign_id = manifest.campaign_id;
        levels.insert(cell.level_pct);
        cells.push_back(std::move(cell));
    }

    const std::optional<double> floor = load_noise_floor(baseline, out_dir);
    const report::RestrictionPolicy policy{cap_pct, pre_collision_only};
    const report::DomainReport rep = report::build_table(
        cells, policy, tol, std::vector<double>(levels.begin(), levels.end()), floor);
    std::cout << report::render_text(rep);

    if (gate_mode && !report::all_restricted_permissible(rep)) return kExitGate;
    return kExitOk;
}

int cmd_selftest(const std::string& out_dir, bool skip_load) {
    selftest::Options options;
    options.work_dir = out_dir.empty() ? fs::path(".simvar-selftest") : fs::path(out_dir);
    options.run_load_checks = !skip_load;
    const auto results = selftest::run_all(options, std::cout);
    return selftest::exit_code(results);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simvar — determinism audit toolkit for simulation environments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    CommonArgs run_args, sweep_args, escalate_args;
    std::string run_baseline;

    CLI::App* run_cmd = app.add_subcommand("run", "repeated runs + analysis + summary");
    add_common_flags(run_cmd, run_args, true);
    run_cmd->add_option("--baseline", run_baseline,
                        "campaign id of a zero-load no-collision baseline (noise floor)");

    std::string sweep_axis = "utilization";
    std::vector<double> sweep_levels;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "audit across utilization or priority levels");
    add_common_flags(sweep_cmd, sweep_args, true);
    sweep_cmd->add_option("--levels", sweep_levels, "swept values, e.g. 0,25,50,75,95")
        ->delimiter(',');
    sweep_cmd->add_option("--axis", sweep_axis, "utilization|priority")
        ->check(CLI::IsMember({"utilization", "priority"}));

    CLI::App* escalate_cmd =
        app.add_subcommand("escalate", "grow sample size in orders of magnitude (--n = max n)");
    add_common_flags(escalate_cmd, escalate_args, true);

    std::string analyze_campaign, analyze_out = "campaigns", analyze_baseline;
    std::optional<double> analyze_tolerance;
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "recompute the audit from stored traces (never re-runs)");
    analyze_cmd->add_option("--campaign", analyze_campaign, "campaign id")->required();
    analyze_cmd->add_option("--out", analyze_out, "base campaigns directory");
    analyze_cmd->add_option("--tolerance", analyze_tolerance, "override manifest tolerance");
    analyze_cmd->add_option("--baseline", analyze_baseline, "noise-floor baseline campaign id");

    std::vector<std::string> report_campaigns;
    std::string report_out = "campaigns", report_baseline;
    double report_cap = 75.0;
    bool report_gate = false;
    bool report_full_range = false;
    std::optional<double> report_tolerance;
    CLI::App* report_cmd = app.add_subcommand("report", "restricted/unrestricted scenario table");
    report_cmd->add_option("--campaign", report_campaigns, "campaign id (repeatable)")
        ->required();
    report_cmd->add_option("--out", report_out, "base campaigns directory");
    report_cmd->add_option("--cap", report_cap, "restricted utilization cap percent");
    report_cmd->add_flag("--full-range", report_full_range,
                         "keep post-collision data in the restricted column");
    report_cmd->add_flag("--gate", report_gate, "exit 2 unless all restricted rows permissible");
    report_cmd->add_option("--tolerance", report_tolerance, "override manifest tolerance");
    report_cmd->add_option("--baseline", report_baseline, "noise-floor baseline campaign id");

    std::string selftest_out;
    bool selftest_skip_load = false;
    CLI::App* selftest_cmd =
        app.add_subcommand("selftest", "run the acceptance fixture suite on the embedded sim");
    selftest_cmd->add_option("--out", selftest_out, "work directory for fixture campaigns");
    selftest_cmd->add_flag("--skip-load", selftest_skip_load,
                           "skip the environment-sensitive load check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_args, run_baseline);
        if (sweep_cmd->parsed()) return cmd_sweep(sweep_args, sweep_axis, sweep_levels);
        if (escalate_cmd->parsed()) return cmd_escalate(escalate_args);
        if (analyze_cmd->parsed()) {
            return cmd_analyze(analyze_campaign, analyze_out, analyze_tolerance,
                               analyze_baseline);
        }
        if (report_cmd->parsed()) {
            return cmd_report(report_campaigns, report_out, report_cap, !report_full_range,
                              report_gate, report_tolerance, report_baseline);
        }
        if (selftest_cmd->parsed()) return cmd_selftest(selftest_out, selftest_skip_load);
    } catch (const TraceError& e) {
        std::cerr << "simvar: " << e.what() << '\n';
        return kExitUsage;
    } catch (const minisim::ScenarioError& e) {
        std::cerr << "simvar: " << e.what() << '\n';
        return kExitUsage;
    } catch (const MetricsError& e) {
        std::cerr << "simvar: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "simvar: " << e.what() << '\n';
        return kExitEnvironment;
    }
    return kExitUsage;
}
