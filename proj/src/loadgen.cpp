#include "simvar/loadgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#ifdef __linux__
#include <sys/types.h>
#include <sys/wait.h>
#include <signal.h>
#include <unistd.h>
#endif

namespace simvar::loadgen {

namespace {

struct CpuTimes {
    unsigned long long busy = 0;
    unsigned long long total = 0;
};

// First line of /proc/stat: cpu user nice system idle iowait irq softirq steal ...
CpuTimes read_cpu_times() {
    std::ifstream f("/proc/stat");
    std::string label;
    if (!f || !(f >> label) || label != "cpu") {
        throw LoadError("OS CPU counters unavailable (no /proc/stat); external sampling required");
    }
    unsigned long long v = 0;
    std::vector<unsigned long long> fields;
    while (f >> v && fields.size() < 10) fields.push_back(v);
    if (fields.size() < 4) throw LoadError("unparseable /proc/stat");
    CpuTimes t;
    for (std::size_t i = 0; i < fields.size(); ++i) t.total += fields[i];
    const unsigned long long idle = fields[3] + (fields.size() > 4 ? fields[4] : 0);
    t.busy = t.total - idle;
    return t;
}

double busy_percent(const CpuTimes& a, const CpuTimes& b) {
    const unsigned long long dt = b.total - a.total;
    if (dt == 0) return 0.0;
    return 100.0 * static_cast<double>(b.busy - a.busy) / static_cast<double>(dt);
}

void spin_for(std::chrono::steady_clock::duration d) {
    const auto end = std::chrono::steady_clock::now() + d;
    volatile double sink = 1.0;
    while (std::chrono::steady_clock::now() < end) {
        for (int i = 0; i < 1000; ++i) sink = sink * 1.0000001 + 1e-9;
    }
}

}  // namespace

UtilizationSample sample_utilization(std::chrono::milliseconds window) {
    const CpuTimes a = read_cpu_times();
    std::this_thread::sleep_for(window);
    const CpuTimes b = read_cpu_times();
    UtilizationSample s;
    s.timestamp = std::chrono::system_clock::now();
    s.cpu_percent_observed = std::clamp(busy_percent(a, b), 0.0, 100.0);
    s.source = UtilizationSource::os_counters;
    return s;
}

UtilizationMonitor::UtilizationMonitor() {
    thread_ = std::thread([this] {
        CpuTimes prev = read_cpu_times();
        while (!stop_.load()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(500));
            const CpuTimes cur = read_cpu_times();
            latest_.store(std::clamp(busy_percent(prev, cur), 0.0, 100.0));
            prev = cur;
        }
    });
}

UtilizationMonitor::~UtilizationMonitor() {
    stop_.store(true);
    if (thread_.joinable()) thread_.join();
}

void LoadGenerator::start(const LoadTarget& target) {
    if (active_) throw LoadError("a load is already active on this handle");
    if (target.cpu_percent < 0.0 || target.cpu_percent > 100.0) {
        throw LoadError("cpu_percent must be within [0, 100]");
    }
    active_ = true;
    stop_flag_.store(false);
    target_percent_ = target.cpu_percent;
    duty_.store(target.cpu_percent);

    if (target.cpu_percent > 0.0) {
        std::size_t count = target.workers;
        if (count == 0) {
            const unsigned hw = std::thread::hardware_concurrency();
            count = hw == 0 ? 1 : hw;
        }
        for (std::size_t w = 0; w < count; ++w) {
            workers_.emplace_back([this] {
                constexpr auto window = std::chrono::milliseconds(100);
                while (!stop_flag_.load()) {
                    const double duty = std::clamp(duty_.load(), 0.0, 100.0);
                    const auto on = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        window * (duty / 100.0));
                    if (on.count() > 0) spin_for(on);
                    const auto off = window - std::chrono::duration_cast<std::chrono::milliseconds>(on);
                    if (off.count() > 0) std::this_thread::sleep_for(off);
                }
            });
        }
        trimmer_ = std::thread([this] { trim_loop(); });
    }

#ifdef __linux__
    if (target.gpu_command && !target.gpu_command->empty()) {
        const pid_t pid = fork();
        if (pid < 0) {
            stop();
            throw LoadError("failed to spawn gpu_command");
        }
        if (pid == 0) {
            setpgid(0, 0);  // own process group, so stop() can signal the tree
            execl("/bin/sh", "sh", "-c", target.gpu_command->c_str(), nullptr);
            _exit(127);
        }
        setpgid(pid, pid);
        gpu_pid_ = pid;
    }
#else
    if (target.gpu_command && !target.gpu_command->empty()) {
        std::fprintf(stderr, "simvar: warning: gpu_command unsupported on this platform\n");
    }
#endif
}

void LoadGenerator::trim_loop() {
    // Closed-loop trim against system-wide observed utilization, once per second.
    CpuTimes prev{};
    bool have_prev = false;
    try {
        prev = read_cpu_times();
        have_prev = true;
    } catch (const LoadError&) {
        return;  // open-loop fallback: keep the initial duty
    }
    int sleeps = 0;
    while (!stop_flag_.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (++sleeps < 10) continue;
        sleeps = 0;
        if (!have_prev) continue;
        const CpuTimes cur = read_cpu_times();
        const double observed = busy_percent(prev, cur);
        prev = cur;
        const double duty = duty_.load();
        duty_.store(std::clamp(duty + 0.5 * (target_percent_ - observed), 0.0, 100.0));
    }
}

void LoadGenerator::stop() {
    if (!active_) {
        std::fprintf(stderr, "simvar: warning: stop_load on an inactive handle (no-op)\n");
        return;
    }
    stop_flag_.store(true);
    for (std::thread& w : workers_) {
        if (w.joinable()) w.join();
    }
    workers_.clear();
    if (trimmer_.joinable()) trimmer_.join();

#ifdef __linux__
    if (gpu_pid_ > 0) {
        kill(-static_cast<pid_t>(gpu_pid_), SIGTERM);
        int status = 0;
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(1);
        pid_t reaped = 0;
        while (std::chrono::steady_clock::now() < deadline) {
            reaped = waitpid(static_cast<pid_t>(gpu_pid_), &status, WNOHANG);
            if (reaped != 0) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        if (reaped == 0) {
            kill(-static_cast<pid_t>(gpu_pid_), SIGKILL);
            waitpid(static_cast<pid_t>(gpu_pid_), &status, 0);
        }
        if (WIFEXITED(status) && WEXITSTATUS(status) != 0 && WEXITSTATUS(status) != 143) {
            std::fprintf(stderr, "simvar: warning: gpu_command exited with status %d\n",
                         WEXITSTATUS(status));
        }
        gpu_pid_ = -1;
    }
#endif
    active_ = false;
}

LoadGenerator::~LoadGenerator() {
    if (active_) stop();
}

}  // namespace simvar::loadgen
