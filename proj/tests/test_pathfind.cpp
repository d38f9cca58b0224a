#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "simvar/catalog.hpp"
#include "simvar/pathfind.hpp"

using namespace simvar;
using namespace simvar::minisim;

TEST_CASE("straight corridor: path cost equals octile (here Euclidean) distance") {
    const NavMesh mesh(20, 5, 1.0);
    std::mt19937_64 rng(1);
    const GridCell start{1, 2}, goal{17, 2};
    const auto path = find_grid_path(mesh, start, goal, FrontierMode::stable_insertion_order, rng);
    CHECK(path.front() == start);
    CHECK(path.back() == goal);
    CHECK(path_cost(path, 1.0) == doctest::Approx(16.0));
    CHECK(path_cost(path, 1.0) == doctest::Approx(octile_distance(start, goal, 1.0)));
}

TEST_CASE("diagonal runs cost sqrt(2) per cell and match the octile heuristic") {
    const NavMesh mesh(16, 16, 0.5);
    std::mt19937_64 rng(1);
    const GridCell start{2, 2}, goal{10, 14};
    const auto path = find_grid_path(mesh, start, goal, FrontierMode::heap_order_deterministic, rng);
    CHECK(path_cost(path, 0.5) == doctest::Approx(octile_distance(start, goal, 0.5)));
}

TEST_CASE("start == goal plans a single waypoint") {
    const NavMesh mesh(10, 10, 1.0);
    std::mt19937_64 rng(1);
    const auto wps = plan_path(mesh, {2.5, 2.5, 0}, {2.5, 2.5, 0},
                               FrontierMode::stable_insertion_order, rng);
    REQUIRE(wps.size() == 1);
    CHECK(wps[0].x == 2.5);
}

TEST_CASE("unreachable and blocked endpoints are errors") {
    NavMesh mesh(10, 10, 1.0);
    mesh.block_rect(5, 0, 5, 9);  // full wall
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(find_grid_path(mesh, {1, 1}, {8, 1}, FrontierMode::stable_insertion_order, rng),
                    PathError);
    CHECK_THROWS_AS(find_grid_path(mesh, {5, 1}, {8, 1}, FrontierMode::stable_insertion_order, rng),
                    PathError);
    CHECK_THROWS_AS(
        find_grid_path(mesh, {1, 1}, {40, 1}, FrontierMode::stable_insertion_order, rng),
        PathError);
}

TEST_CASE("all modes return optimal-cost paths around obstacles") {
    const TwoRouteFixture fx = two_route_fixture();
    std::mt19937_64 rng(77);
    const double expect =
        path_cost(find_grid_path(fx.mesh, fx.start, fx.goal,
                                 FrontierMode::stable_insertion_order, rng),
                  1.0);
    for (const FrontierMode mode :
         {FrontierMode::heap_order_deterministic, FrontierMode::random_tiebreak}) {
        for (int i = 0; i < 20; ++i) {
            const auto path = find_grid_path(fx.mesh, fx.start, fx.goal, mode, rng);
            CHECK(path_cost(path, 1.0) == doctest::Approx(expect));
        }
    }
}

TEST_CASE("stable mode is invariant under repeated invocation and re-seeding") {
    const TwoRouteFixture fx = two_route_fixture();
    std::mt19937_64 rng0(0);
    const auto reference =
        find_grid_path(fx.mesh, fx.start, fx.goal, FrontierMode::stable_insertion_order, rng0);
    for (std::uint64_t seed = 1; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const auto path =
            find_grid_path(fx.mesh, fx.start, fx.goal, FrontierMode::stable_insertion_order, rng);
        CHECK(path == reference);
    }
}

TEST_CASE("heap mode is deterministic for identical insertion sequences") {
    const TwoRouteFixture fx = two_route_fixture();
    std::mt19937_64 rng(3);
    const auto a =
        find_grid_path(fx.mesh, fx.start, fx.goal, FrontierMode::heap_order_deterministic, rng);
    const auto b =
        find_grid_path(fx.mesh, fx.start, fx.goal, FrontierMode::heap_order_deterministic, rng);
    CHECK(a == b);
}

TEST_CASE("random tie-breaking explores both symmetric routes") {
    const TwoRouteFixture fx = two_route_fixture();
    std::set<int> signatures;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto path = find_grid_path(fx.mesh, fx.start, fx.goal,
                                         FrontierMode::random_tiebreak, rng);
        const int sig = two_route_signature(path);
        CHECK(sig != 0);
        signatures.insert(sig);
    }
    CHECK(signatures.size() == 2);
}

TEST_CASE("densify resamples at fixed spacing and keeps the endpoint") {
    const std::vector<Position> line{{0, 0, 0}, {1, 0, 0}};
    const auto wps = densify(line, 0.1);
    REQUIRE(wps.size() == 11);
    for (std::size_t i = 0; i < wps.size(); ++i) {
        CHECK(wps[i].x == doctest::Approx(0.1 * static_cast<double>(i)));
    }
    CHECK(wps.back().x == 1.0);

    // Arc-length spacing survives corners: 1.25 m of polyline at 0.1 m
    // spacing gives 13 samples plus the kept endpoint, and no step exceeds
    // the spacing.
    const std::vector<Position> corner{{0, 0, 0}, {0.25, 0, 0}, {0.25, 1, 0}};
    const auto cw = densify(corner, 0.1);
    CHECK(cw.size() == 14);
    CHECK(cw.back().y == 1.0);
    for (std::size_t i = 1; i < cw.size(); ++i) {
        const double d = std::hypot(cw[i].x - cw[i - 1].x, cw[i].y - cw[i - 1].y);
        CHECK(d <= 0.1 + 1e-9);
    }
}
