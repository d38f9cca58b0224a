#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "simvar/loadgen.hpp"

using namespace simvar::loadgen;
using namespace std::chrono;

TEST_CASE("sample_utilization returns an in-range system-wide busy fraction") {
    const UtilizationSample s = sample_utilization(milliseconds(500));
    CHECK(s.cpu_percent_observed >= 0.0);
    CHECK(s.cpu_percent_observed <= 100.0);
    CHECK(s.source == UtilizationSource::os_counters);
}

TEST_CASE("zero-percent target spawns no workers") {
    LoadGenerator load;
    load.start(LoadTarget{0.0, std::nullopt, 0});
    CHECK(load.active());
    load.stop();
    CHECK_FALSE(load.active());
}

TEST_CASE("double start is an error; double stop is a warning no-op") {
    LoadGenerator load;
    load.start(LoadTarget{0.0, std::nullopt, 0});
    CHECK_THROWS_AS(load.start(LoadTarget{10.0, std::nullopt, 0}), LoadError);
    load.stop();
    load.stop();  // no-op
    CHECK_FALSE(load.active());
}

TEST_CASE("out-of-range target is rejected") {
    LoadGenerator load;
    CHECK_THROWS_AS(load.start(LoadTarget{130.0, std::nullopt, 0}), LoadError);
}

TEST_CASE("workers stop within a second") {
    LoadGenerator load;
    load.start(LoadTarget{50.0, std::nullopt, 1});
    std::this_thread::sleep_for(milliseconds(300));
    const auto t0 = steady_clock::now();
    load.stop();
    CHECK(duration<double>(steady_clock::now() - t0).count() < 1.0);
}

TEST_CASE("gpu_command child is terminated on stop") {
    const char* marker = "/tmp/simvar-gpu-load-test-marker";
    std::remove(marker);
    LoadGenerator load;
    LoadTarget target;
    target.cpu_percent = 0.0;
    target.gpu_command = std::string("touch ") + marker + " && sleep 600";
    load.start(target);
    std::this_thread::sleep_for(milliseconds(400));
    const auto t0 = steady_clock::now();
    load.stop();
    CHECK(duration<double>(steady_clock::now() - t0).count() < 2.0);
    std::ifstream f(marker);
    CHECK(f.good());  // command did run before being signaled
    std::remove(marker);
}

// Accuracy against OS counters is covered by the acceptance suite's
// environment-sensitive check; here just confirm the duty trim stays sane.
TEST_CASE("duty cycle stays within bounds while trimming") {
    LoadGenerator load;
    load.start(LoadTarget{30.0, std::nullopt, 1});
    std::this_thread::sleep_for(milliseconds(1500));
    CHECK(load.duty_percent() >= 0.0);
    CHECK(load.duty_percent() <= 100.0);
    load.stop();
}
