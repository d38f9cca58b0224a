#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simvar/loadgen.hpp"
#include "simvar/metrics.hpp"
#include "simvar/minisim.hpp"
#include "simvar/trace.hpp"

namespace simvar::orchestrate {

class OrchestrateError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class SeedPolicy { fixed_single_seed, per_run_seed };

// Fixture mode for sweeps on the embedded simulator: timestep jitter becomes
// active when the simulated contention index — load level scaled by scheduling
// priority — exceeds the threshold. Models load/priority pressure so sweep
// behavior can be exercised without a real contended host.
struct JitterUnderLoad {
    double threshold_pct = 75.0;
    double probability = 0.5;  // per-tick probability while active
};

struct CampaignConfig {
    std::string config_id = "default";
    std::string campaign_id;               // defaults to config_id
    std::filesystem::path out_dir = "campaigns";
    std::size_t n = 2;
    SeedPolicy seed_policy = SeedPolicy::fixed_single_seed;
    std::uint64_t seed = 0;                // the fixed seed, or the per-run base
    loadgen::LoadTarget load;
    double load_settle_s = 1.0;            // wait after starting a nonzero load
    int priority = 0;                      // nice offset, -20..19
    std::vector<int> pinning;              // cores; empty = no pinning
    Tolerance tolerance;
    std::optional<bool> stop_on_collision; // overrides the scenario setting
    bool parallel = false;                 // invalidates utilization control
    std::optional<JitterUnderLoad> jitter_under_load;
};

struct RunRequest {
    std::size_t run_index = 0;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> injector_entropy;  // per-run derived
    std::optional<double> jitter_probability;       // enables timestep_jitter
    std::optional<bool> stop_on_collision;
    std::filesystem::path out_trace_path;           // where external commands must write
    int priority = 0;                               // applied to external children
    std::vector<int> pinning;
    double timeout_s = 300.0;
};

// A simulator the orchestrator can drive: the embedded mini-sim, or any
// external command producing a trace file at {out_trace} and exiting 0.
class SimulatorAdapter {
  public:
    virtual ~SimulatorAdapter() = default;
    virtual std::string kind() const = 0;
    virtual std::string scenario_id() const = 0;
    virtual RunTrace run_once(const RunRequest& req) = 0;
    // Copies the scenario into the campaign directory for provenance.
    virtual void archive_scenario(const std::filesystem::path& path) const = 0;
};

class EmbeddedAdapter final : public SimulatorAdapter {
  public:
    explicit EmbeddedAdapter(minisim::ScenarioSpec spec);
    std::string kind() const override { return "embedded"; }
    std::string scenario_id() const override { return spec_.scenario_id; }
    RunTrace run_once(const RunRequest& req) override;
    void archive_scenario(const std::filesystem::path& path) const override;
    const minisim::ScenarioSpec& spec() const { return spec_; }

  private:
    minisim::ScenarioSpec spec_;
};

// Command template placeholders: {scenario_file} {seed} {out_trace}.
class ExternalAdapter final : public SimulatorAdapter {
  public:
    ExternalAdapter(std::string command_template, std::filesystem::path scenario_file,
                    std::string scenario_id, double timeout_s = 300.0);
    std::string kind() const override { return "external"; }
    std::string scenario_id() const override { return scenario_id_; }
    RunTrace run_once(const RunRequest& req) override;
    void archive_scenario(const std::filesystem::path& path) const override;

  private:
    std::string command_template_;
    std::filesystem::path scenario_file_;
    std::string scenario_id_;
    double timeout_s_;
};

struct RunFailure {
    std::size_t index = 0;
    std::string message;
};

struct CampaignResult {
    RunSet runs;
    std::vector<RunFailure> failures;
    std::filesystem::path dir;
};

// Executes n repeats under the configured load/priority/pinning, collecting
// traces under <out_dir>/<campaign_id>/runs/<k>.trace. The environment is
// restored even when the campaign aborts; the campaign aborts once more than
// 1% of runs have failed.
CampaignResult run_repeats(SimulatorAdapter& adapter, const CampaignConfig& config);

enum class SweepAxis { utilization, priority };

struct SweepRow {
    std::string config_id;
    double value = 0.0;  // utilization percent, or nice value
    AuditResult audit;
    CampaignConfig config;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::utilization;
    std::vector<SweepRow> rows;
    // Highest swept value whose verdict is permissible (the operational
    // domain boundary), if any.
    std::optional<double> domain_boundary;
};

// One run_repeats per level with identical seeds and settings; levels must be
// sorted ascending. Warns when the host baseline utilization exceeds 10%.
SweepResult sweep_utilization(SimulatorAdapter& adapter, const CampaignConfig& base,
                              const std::vector<double>& levels);
SweepResult sweep_priority(SimulatorAdapter& adapter, const CampaignConfig& base,
                           const std::vector<int>& priorities);

struct EscalationResult {
    std::size_t n_final = 0;
    AuditResult audit;
    std::vector<std::size_t> stages;  // the n at each completed stage
};

// Grows the sample size in orders of magnitude (10, 100, 1000, ... max_n),
// recomputing maxsigma at each stage. Stops early only on a non-permissible
// verdict; a permissible verdict requires reaching max_n.
EscalationResult escalate_sample_size(SimulatorAdapter& adapter, const CampaignConfig& config,
                                      Tolerance tolerance, std::size_t max_n);

// Names of controlled fields that differ between two configs (the
// one-factor-at-a-time discipline check for sweeps).
std::vector<std::string> config_diff(const CampaignConfig& a, const CampaignConfig& b);

// Campaign directory persistence.
void write_manifest(const std::filesystem::path& dir, const CampaignConfig& config,
                    const std::string& adapter_kind, const std::string& scenario_id,
                    std::size_t n_completed, std::size_t n_failed);

struct CampaignManifest {
    std::string config_id;
    std::string campaign_id;
    std::string scenario_id;
    std::string adapter_kind;
    std::size_t n = 0;
    Tolerance tolerance;
    std::map<std::string, std::string> fields;
};

CampaignManifest read_manifest(const std::filesystem::path& dir);

// Loads all stored traces of a campaign into a RunSet (pure; never re-runs).
RunSet load_campaign(const std::filesystem::path& dir);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace simvar::orchestrate
