// Acceptance suite: runs every selftest fixture check and reports one
// pass/fail line per check. Exit code 0 only when everything passes.

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "simvar/selftest.hpp"

int main() {
    simvar::selftest::Options options;
    options.work_dir = std::filesystem::temp_directory_path() / "simvar-acceptance";
    if (const char* dir = std::getenv("SIMVAR_ACCEPTANCE_DIR"); dir != nullptr && dir[0]) {
        options.work_dir = dir;
    }
    const auto results = simvar::selftest::run_all(options, std::cout);
    std::size_t passed = 0, failed = 0, skipped = 0;
    for (const auto& r : results) {
        if (r.skipped) {
            ++skipped;
        } else if (r.passed) {
            ++passed;
        } else {
            ++failed;
        }
    }
    std::cout << passed << " passed, " << failed << " failed, " << skipped << " skipped\n";
    return simvar::selftest::exit_code(results);
}
