#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace simvar::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    bool skipped = false;
    std::string detail;
};

struct Options {
    std::filesystem::path work_dir = ".simvar-selftest";
    bool run_load_checks = true;  // the environment-sensitive utilization check
    bool verbose = false;
};

// Runs the full fixture suite on the embedded simulator, printing one
// pass/fail line per check to `out`. Lets users validate determinism on their
// own hardware and OS, since measured variance does not transfer between
// systems.
std::vector<CheckResult> run_all(const Options& options, std::ostream& out);

// 0 when everything passed (skips allowed), 2 otherwise.
int exit_code(const std::vector<CheckResult>& results);

}  // namespace simvar::selftest
