#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace simvar::loadgen {

class LoadError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct LoadTarget {
    double cpu_percent = 0.0;                 // 0..100, system-wide target
    std::optional<std::string> gpu_command;   // external hook, run via the shell
    std::size_t workers = 0;                  // 0 => logical CPU count
};

enum class UtilizationSource { os_counters, external };

struct UtilizationSample {
    std::chrono::system_clock::time_point timestamp;
    double cpu_percent_observed = 0.0;  // system-wide busy fraction, 0..100
    UtilizationSource source = UtilizationSource::os_counters;
};

// One-shot system-wide CPU busy fraction over `window` (blocks that long).
// Throws LoadError where OS counters are unavailable.
UtilizationSample sample_utilization(
    std::chrono::milliseconds window = std::chrono::milliseconds(500));

// Background sampler refreshing every 500 ms; cheap to query per run.
class UtilizationMonitor {
  public:
    UtilizationMonitor();
    ~UtilizationMonitor();
    UtilizationMonitor(const UtilizationMonitor&) = delete;
    UtilizationMonitor& operator=(const UtilizationMonitor&) = delete;

    double latest_percent() const { return latest_.load(); }

  private:
    std::atomic<double> latest_{0.0};
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

// Busy-spin workers with duty-cycle modulation: per 100 ms window each worker
// spins for duty% and sleeps the rest. A trim loop adjusts the duty every
// second against observed system utilization, so the target is comparable
// across machines. Load never touches simulator memory or files; the only
// interference channel is CPU contention.
class LoadGenerator {
  public:
    LoadGenerator() = default;
    ~LoadGenerator();
    LoadGenerator(const LoadGenerator&) = delete;
    LoadGenerator& operator=(const LoadGenerator&) = delete;

    // Throws LoadError if a load is already active on this handle.
    void start(const LoadTarget& target);
    // Idempotent; the second call is a no-op warning. Workers terminate within
    // 1 s; a gpu_command child is signaled to exit.
    void stop();
    bool active() const { return active_; }
    double duty_percent() const { return duty_.load(); }

  private:
    void trim_loop();

    bool active_ = false;
    double target_percent_ = 0.0;
    std::atomic<double> duty_{0.0};
    std::atomic<bool> stop_flag_{false};
    std::vector<std::thread> workers_;
    std::thread trimmer_;
    long gpu_pid_ = -1;
};

}  // namespace simvar::loadgen
