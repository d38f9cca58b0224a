#include "simvar/orchestrate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "simvar/scenario_io.hpp"
#include "simvar/version.hpp"

#ifdef __linux__
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>
#endif

namespace simvar::orchestrate {

namespace fs = std::filesystem;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::string now_unix_ms() {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    return std::to_string(ms);
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

// Applies priority/pinning to the calling process and restores on destruction.
// The paper's controls are OS-specific, so the contract is apply-or-warn,
// never silently ignore.
class EnvironmentGuard {
  public:
    EnvironmentGuard(int priority, const std::vector<int>& pinning) {
#ifdef __linux__
        if (priority != 0) {
            errno = 0;
            saved_priority_ = getpriority(PRIO_PROCESS, 0);
            if (errno != 0) {
                std::fprintf(stderr, "simvar: warning: cannot read process priority\n");
            } else if (setpriority(PRIO_PROCESS, 0, priority) != 0) {
                std::fprintf(stderr, "simvar: warning: cannot set priority %d (skipped)\n",
                             priority);
            } else {
                priority_set_ = true;
            }
        }
        if (!pinning.empty()) {
            if (sched_getaffinity(0, sizeof(saved_mask_), &saved_mask_) != 0) {
                std::fprintf(stderr, "simvar: warning: cannot read CPU affinity\n");
            } else {
                cpu_set_t mask;
                CPU_ZERO(&mask);
                for (int core : pinning) CPU_SET(core, &mask);
                if (sched_setaffinity(0, sizeof(mask), &mask) != 0) {
                    std::fprintf(stderr, "simvar: warning: cannot pin to cores %s (skipped)\n",
                                 join_ints(pinning).c_str());
                } else {
                    affinity_set_ = true;
                }
            }
        }
#else
        if (priority != 0 || !pinning.empty()) {
            std::fprintf(stderr,
                         "simvar: warning: priority/pinning unsupported on this platform\n");
        }
#endif
    }

    ~EnvironmentGuard() {
#ifdef __linux__
        if (priority_set_ && setpriority(PRIO_PROCESS, 0, saved_priority_) != 0) {
            std::fprintf(stderr, "simvar: warning: failed to restore process priority\n");
        }
        if (affinity_set_ && sched_setaffinity(0, sizeof(saved_mask_), &saved_mask_) != 0) {
            std::fprintf(stderr, "simvar: warning: failed to restore CPU affinity\n");
        }
#endif
    }

  private:
#ifdef __linux__
    int saved_priority_ = 0;
    cpu_set_t saved_mask_{};
#endif
    bool priority_set_ = false;
    bool affinity_set_ = false;
};

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string read_file_tail(const fs::path& path, std::size_t max_bytes = 2000) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return {};
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (content.size() > max_bytes) content = "..." + content.substr(content.size() - max_bytes);
    return content;
}

// Simulated contention index for the jitter-under-load fixture: the load
// level scaled by a NICE factor (high priority -20 halves the pressure,
// lowest priority +19 raises it).
double contention_index(double level_pct, int priority) {
    return level_pct * (0.5 + (priority + 20) / 40.0);
}

}  // namespace

EmbeddedAdapter::EmbeddedAdapter(minisim::ScenarioSpec spec) : spec_(std::move(spec)) {
    minisim::validate_scenario(spec_);
}

RunTrace EmbeddedAdapter::run_once(const RunRequest& req) {
    minisim::ScenarioSpec spec = spec_;
    if (req.injector_entropy) spec.injectors.entropy_seed = req.injector_entropy;
    if (req.jitter_probability) {
        spec.injectors.timestep_jitter = *req.jitter_probability > 0.0;
        spec.injectors.timestep_jitter_probability = *req.jitter_probability;
    }
    if (req.stop_on_collision) spec.stop_on_collision = *req.stop_on_collision;
    return minisim::simulate(spec, req.seed);
}

void EmbeddedAdapter::archive_scenario(const fs::path& path) const {
    minisim::write_scenario_file(spec_, path.string());
}

ExternalAdapter::ExternalAdapter(std::string command_template, fs::path scenario_file,
                                 std::string scenario_id, double timeout_s)
    : command_template_(std::move(command_template)),
      scenario_file_(std::move(scenario_file)),
      scenario_id_(std::move(scenario_id)),
      timeout_s_(timeout_s) {
    if (command_template_.find("{out_trace}") == std::string::npos) {
        throw OrchestrateError("external adapter command must contain {out_trace}");
    }
}

RunTrace ExternalAdapter::run_once(const RunRequest& req) {
#ifndef __linux__
    throw OrchestrateError("external adapters are only supported on Linux");
#else
    std::string cmd = command_template_;
    cmd = replace_all(cmd, "{scenario_file}", scenario_file_.string());
    cmd = replace_all(cmd, "{seed}", std::to_string(req.seed));
    cmd = replace_all(cmd, "{out_trace}", req.out_trace_path.string());

    const fs::path stderr_path = req.out_trace_path.string() + ".stderr";
    const pid_t pid = fork();
    if (pid < 0) throw OrchestrateError("fork failed for external adapter");
    if (pid == 0) {
        if (req.priority != 0) {
            if (setpriority(PRIO_PROCESS, 0, req.priority) != 0) {
                std::fprintf(stderr, "simvar: warning: child cannot set priority %d\n",
                             req.priority);
            }
        }
        if (!req.pinning.empty()) {
            cpu_set_t mask;
            CPU_ZERO(&mask);
            for (int core : req.pinning) CPU_SET(core, &mask);
            if (sched_setaffinity(0, sizeof(mask), &mask) != 0) {
                std::fprintf(stderr, "simvar: warning: child cannot set affinity\n");
            }
        }
        if (FILE* f = std::freopen(stderr_path.c_str(), "w", stderr); f == nullptr) {
            // keep inherited stderr
        }
        execl("/bin/sh", "sh", "-c", cmd.c_str(), nullptr);
        _exit(127);
    }

    const double timeout = req.timeout_s > 0.0 ? req.timeout_s : timeout_s_;
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout);
    int status = 0;
    while (true) {
        const pid_t reaped = waitpid(pid, &status, WNOHANG);
        if (reaped == pid) break;
        if (reaped < 0) throw OrchestrateError("waitpid failed for external adapter");
        if (std::chrono::steady_clock::now() > deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw OrchestrateError("external adapter timed out after " +
                                   std::to_string(timeout) + " s");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::string msg = "external adapter exited with status " + std::to_string(code);
        const std::string tail = read_file_tail(stderr_path);
        if (!tail.empty()) msg += "; stderr: " + tail;
        throw OrchestrateError(msg);
    }
    std::error_code ec;
    if (fs::file_size(stderr_path, ec) == 0) fs::remove(stderr_path, ec);
    return parse_trace_file(req.out_trace_path.string());
#endif
}

void ExternalAdapter::archive_scenario(const fs::path& path) const {
    std::error_code ec;
    fs::copy_file(scenario_file_, path, fs::copy_options::overwrite_existing, ec);
    if (ec) {
        std::fprintf(stderr, "simvar: warning: could not archive scenario file %s\n",
                     scenario_file_.string().c_str());
    }
}

namespace {

class CampaignRunner {
  public:
    CampaignRunner(SimulatorAdapter& adapter, const CampaignConfig& config)
        : adapter_(adapter), config_(config), guard_(config.priority, config.pinning) {
        if (config_.n < 2) throw OrchestrateError("campaign needs n >= 2");
        if (config_.campaign_id.empty()) config_.campaign_id = config_.config_id;
        dir_ = config_.out_dir / config_.campaign_id;
        fs::create_directories(dir_ / "runs");
        adapter_.archive_scenario(dir_ / "scenario.scn");

        result_.runs.scenario_id = adapter_.scenario_id();
        result_.runs.config_id = config_.config_id;
        result_.dir = dir_;

        if (config_.load.cpu_percent > 0.0 || config_.load.gpu_command) {
            load_.start(config_.load);
            if (config_.load_settle_s > 0.0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(config_.load_settle_s));
            }
        }
    }

    ~CampaignRunner() {
        if (load_.active()) load_.stop();
    }

    const CampaignConfig& config() const { return config_; }
    const RunSet& runs() const { return result_.runs; }

    // Runs indices [runs.size(), target_n); aborts once failures exceed 1%.
    void extend_to(std::size_t target_n) {
        const std::size_t from = next_index_;
        if (target_n <= from) return;
        if (config_.parallel) {
            run_parallel(from, target_n);
        } else {
            for (std::size_t k = from; k < target_n; ++k) execute_run(k);
        }
        next_index_ = target_n;
        write_manifest(dir_, config_, adapter_.kind(), adapter_.scenario_id(),
                       result_.runs.runs.size(), result_.failures.size());
    }

    CampaignResult take_result() { return std::move(result_); }

  private:
    RunRequest make_request(std::size_t k) const {
        RunRequest req;
        req.run_index = k;
        req.seed = config_.seed_policy == SeedPolicy::fixed_single_seed
                       ? config_.seed
                       : config_.seed + static_cast<std::uint64_t>(k);
        req.out_trace_path = dir_ / "runs" / (std::to_string(k) + ".trace");
        req.priority = config_.priority;
        req.pinning = config_.pinning;
        req.stop_on_collision = config_.stop_on_collision;

        // Per-run injector entropy: reproducible derivation from the base
        // entropy seed, so repeats differ but the campaign replays identically.
        if (const auto* embedded = dynamic_cast<const EmbeddedAdapter*>(&adapter_)) {
            if (embedded->spec().injectors.entropy_seed) {
                req.injector_entropy =
                    splitmix64(*embedded->spec().injectors.entropy_seed +
                               static_cast<std::uint64_t>(k));
            }
            if (config_.jitter_under_load) {
                const double contention =
                    contention_index(config_.load.cpu_percent, config_.priority);
                req.jitter_probability = contention > config_.jitter_under_load->threshold_pct
                                             ? config_.jitter_under_load->probability
                                             : 0.0;
            }
        }
        return req;
    }

    void execute_run(std::size_t k) {
        const RunRequest req = make_request(k);
        const std::string started = now_unix_ms();
        const auto t0 = std::chrono::steady_clock::now();
        RunTrace trace;
        try {
            trace = adapter_.run_once(req);
        } catch (const std::exception& e) {
            record_failure(k, e.what());
            return;
        }
        const auto t1 = std::chrono::steady_clock::now();

        trace.run_id = "run" + std::to_string(k);
        trace.metadata["run_index"] = std::to_string(k);
        trace.metadata["run_started_unix_ms"] = started;
        trace.metadata["run_finished_unix_ms"] = now_unix_ms();
        trace.metadata["wall_clock_s"] =
            format_double(std::chrono::duration<double>(t1 - t0).count());
        trace.metadata["util_target"] = format_double(config_.load.cpu_percent);
        trace.metadata["util_observed"] = format_double(monitor_.latest_percent());
        trace.metadata["priority"] = std::to_string(config_.priority);
        trace.metadata["pinning"] = join_ints(config_.pinning);
        if (config_.parallel) trace.metadata["utilization_invalid"] = "true";
        if (req.injector_entropy) {
            trace.metadata["injector_entropy"] = std::to_string(*req.injector_entropy);
        }

        write_trace_file(trace, req.out_trace_path.string());
        {
            std::lock_guard<std::mutex> lock(mutex_);
            result_.runs.runs.push_back(std::move(trace));
        }
    }

    void record_failure(std::size_t k, const std::string& message) {
        std::lock_guard<std::mutex> lock(mutex_);
        result_.failures.push_back(RunFailure{k, message});
        std::ofstream f(dir_ / "runs" / (std::to_string(k) + ".failed"));
        f << message << '\n';
        std::fprintf(stderr, "simvar: run %zu failed: %s\n", k, message.c_str());
        // A failed run is itself evidence of environmental instability; more
        // than 1% of them aborts the campaign.
        const double limit = 0.01 * static_cast<double>(config_.n);
        if (static_cast<double>(result_.failures.size()) > limit) {
            throw OrchestrateError("campaign aborted: " +
                                   std::to_string(result_.failures.size()) +
                                   " failed runs exceed 1% of n=" + std::to_string(config_.n));
        }
    }

    void run_parallel(std::size_t from, std::size_t to) {
        unsigned hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 2;
        const std::size_t pool = std::min<std::size_t>(hw, to - from);
        std::atomic<std::size_t> next{from};
        std::vector<std::thread> threads;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (std::size_t i = 0; i < pool; ++i) {
            threads.emplace_back([&] {
                while (true) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= to) return;
                    try {
                        execute_run(k);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (std::thread& t : threads) t.join();
        if (first_error) std::rethrow_exception(first_error);
        // Parallel completion order is nondeterministic; restore index order.
        std::sort(result_.runs.runs.begin(), result_.runs.runs.end(),
                  [](const RunTrace& a, const RunTrace& b) {
                      return std::stoull(a.metadata.at("run_index")) <
                             std::stoull(b.metadata.at("run_index"));
                  });
    }

    SimulatorAdapter& adapter_;
    CampaignConfig config_;
    EnvironmentGuard guard_;
    loadgen::LoadGenerator load_;
    loadgen::UtilizationMonitor monitor_;
    fs::path dir_;
    CampaignResult result_;
    std::size_t next_index_ = 0;
    std::mutex mutex_;
};

}  // namespace

CampaignResult run_repeats(SimulatorAdapter& adapter, const CampaignConfig& config) {
    CampaignRunner runner(adapter, config);
    runner.extend_to(config.n);
    return runner.take_result();
}

namespace {

SweepResult sweep_impl(SimulatorAdapter& adapter, const CampaignConfig& base, SweepAxis axis,
                       const std::vector<double>& values) {
    if (values.empty()) throw OrchestrateError("sweep needs at least one level");
    if (!std::is_sorted(values.begin(), values.end())) {
        throw OrchestrateError("sweep levels must be sorted ascending");
    }
    try {
        const auto baseline = loadgen::sample_utilization();
        if (baseline.cpu_percent_observed > 10.0) {
            std::fprintf(stderr,
                         "simvar: warning: baseline utilization %.1f%% > 10%%; sweep results "
                         "may be contaminated\n",
                         baseline.cpu_percent_observed);
        }
    } catch (const loadgen::LoadError& e) {
        std::fprintf(stderr, "simvar: warning: %s\n", e.what());
    }

    SweepResult sweep;
    sweep.axis = axis;
    for (double value : values) {
        CampaignConfig config = base;
        std::string tag;
        if (axis == SweepAxis::utilization) {
            config.load.cpu_percent = value;
            tag = "u" + std::to_string(static_cast<long long>(std::llround(value)));
        } else {
            config.priority = static_cast<int>(value);
            tag = "p" + std::to_string(static_cast<long long>(std::llround(value)));
        }
        config.config_id = base.config_id + "-" + tag;
        config.campaign_id =
            (base.campaign_id.empty() ? base.config_id : base.campaign_id) + "-" + tag;

        CampaignResult res = run_repeats(adapter, config);
        AuditResult audit_res = audit(res.runs, config.tolerance);
        sweep.rows.push_back(SweepRow{config.config_id, value, std::move(audit_res), config});
    }
    for (const SweepRow& row : sweep.rows) {
        if (row.audit.verdict == Verdict::permissible) {
            if (!sweep.domain_boundary || row.value > *sweep.domain_boundary) {
                sweep.domain_boundary = row.value;
            }
        }
    }
    return sweep;
}

}  // namespace

SweepResult sweep_utilization(SimulatorAdapter& adapter, const CampaignConfig& base,
                              const std::vector<double>& levels) {
    return sweep_impl(adapter, base, SweepAxis::utilization, levels);
}

SweepResult sweep_priority(SimulatorAdapter& adapter, const CampaignConfig& base,
                           const std::vector<int>& priorities) {
    std::vector<double> values(priorities.begin(), priorities.end());
    return sweep_impl(adapter, base, SweepAxis::priority, values);
}

EscalationResult escalate_sample_size(SimulatorAdapter& adapter, const CampaignConfig& config,
                                      Tolerance tolerance, std::size_t max_n) {
    if (max_n < 10) throw OrchestrateError("escalation needs max_n >= 10");

    std::vector<std::size_t> stages;
    for (std::size_t n = 10; n < max_n; n *= 10) stages.push_back(n);
    stages.push_back(max_n);

    CampaignConfig staged = config;
    staged.n = max_n;
    staged.tolerance = tolerance;
    CampaignRunner runner(adapter, staged);

    EscalationResult result;
    for (std::size_t stage_n : stages) {
        runner.extend_to(stage_n);
        // Audit over the runs completed so far; maximum, never an average.
        result.stages.push_back(stage_n);
        result.n_final = stage_n;
        result.audit = audit(runner.runs(), tolerance);
        if (result.audit.verdict == Verdict::non_permissible) break;  // conclusive
    }
    return result;
}

std::vector<std::string> config_diff(const CampaignConfig& a, const CampaignConfig& b) {
    std::vector<std::string> diff;
    if (a.n != b.n) diff.push_back("n");
    if (a.seed_policy != b.seed_policy) diff.push_back("seed_policy");
    if (a.seed != b.seed) diff.push_back("seed");
    if (a.load.cpu_percent != b.load.cpu_percent) diff.push_back("load.cpu_percent");
    if (a.load.gpu_command != b.load.gpu_command) diff.push_back("load.gpu_command");
    if (a.priority != b.priority) diff.push_back("priority");
    if (a.pinning != b.pinning) diff.push_back("pinning");
    if (a.tolerance.value != b.tolerance.value) diff.push_back("tolerance");
    if (a.stop_on_collision != b.stop_on_collision) diff.push_back("stop_on_collision");
    if (a.parallel != b.parallel) diff.push_back("parallel");
    return diff;
}

void write_manifest(const fs::path& dir, const CampaignConfig& config,
                    const std::string& adapter_kind, const std::string& scenario_id,
                    std::size_t n_completed, std::size_t n_failed) {
    std::ofstream f(dir / "manifest");
    if (!f) throw OrchestrateError("cannot write campaign manifest in " + dir.string());
    f << "#simvar-campaign v1\n";
    f << "campaign_id=" << (config.campaign_id.empty() ? config.config_id : config.campaign_id)
      << '\n';
    f << "config_id=" << config.config_id << '\n';
    f << "scenario_id=" << scenario_id << '\n';
    f << "adapter=" << adapter_kind << '\n';
    f << "n=" << config.n << '\n';
    f << "n_completed=" << n_completed << '\n';
    f << "n_failed=" << n_failed << '\n';
    f << "seed_policy="
      << (config.seed_policy == SeedPolicy::fixed_single_seed ? "fixed_single_seed"
                                                              : "per_run_seed")
      << '\n';
    f << "seed=" << config.seed << '\n';
    f << "load_cpu_percent=" << format_double(config.load.cpu_percent) << '\n';
    if (config.load.gpu_command) f << "gpu_command=" << *config.load.gpu_command << '\n';
    f << "priority=" << config.priority << '\n';
    f << "pinning=" << join_ints(config.pinning) << '\n';
    f << "tolerance_m=" << format_double(config.tolerance.value) << '\n';
    if (config.stop_on_collision) {
        f << "stop_on_collision=" << (*config.stop_on_collision ? "true" : "false") << '\n';
    }
    f << "parallel=" << (config.parallel ? "true" : "false") << '\n';
    if (config.jitter_under_load) {
        f << "jitter_under_load=" << format_double(config.jitter_under_load->threshold_pct) << ':'
          << format_double(config.jitter_under_load->probability) << '\n';
    }
    f << "entropy_derivation=splitmix64_v1\n";
    f << "toolkit_version=" << kVersion << '\n';
}

CampaignManifest read_manifest(const fs::path& dir) {
    std::ifstream f(dir / "manifest");
    if (!f) throw OrchestrateError("no campaign manifest in " + dir.string());
    std::string line;
    if (!std::getline(f, line) || line != "#simvar-campaign v1") {
        throw OrchestrateError("unsupported campaign manifest version in " + dir.string());
    }
    CampaignManifest m;
    while (std::getline(f, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        m.fields[line.substr(0, eq)] = line.substr(eq + 1);
    }
    m.config_id = m.fields["config_id"];
    m.campaign_id = m.fields["campaign_id"];
    m.scenario_id = m.fields["scenario_id"];
    m.adapter_kind = m.fields["adapter"];
    if (m.fields.count("n")) m.n = std::stoull(m.fields["n"]);
    if (m.fields.count("tolerance_m")) m.tolerance.value = parse_double(m.fields["tolerance_m"]);
    return m;
}

RunSet load_campaign(const fs::path& dir) {
    const CampaignManifest manifest = read_manifest(dir);
    RunSet rs;
    rs.scenario_id = manifest.scenario_id;
    rs.config_id = manifest.config_id;

    std::vector<std::pair<long long, fs::path>> files;
    const fs::path runs_dir = dir / "runs";
    if (!fs::exists(runs_dir)) throw OrchestrateError("no runs directory in " + dir.string());
    for (const auto& entry : fs::directory_iterator(runs_dir)) {
        if (entry.path().extension() != ".trace") continue;
        files.emplace_back(std::stoll(entry.path().stem().string()), entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& [index, path] : files) {
        rs.runs.push_back(parse_trace_file(path.string()));
    }
    if (rs.runs.empty()) throw OrchestrateError("campaign has no stored traces: " + dir.string());
    return rs;
}

}  // namespace simvar::orchestrate
