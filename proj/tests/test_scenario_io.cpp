#include <doctest.h>

#include "simvar/catalog.hpp"
#include "simvar/scenario_io.hpp"

using namespace simvar;
using namespace simvar::minisim;

TEST_CASE("scenario round trip preserves the spec") {
    for (const std::string& id : catalog_ids()) {
        ScenarioSpec spec = catalog_scenario(id);
        spec.injectors.collision_impulse_jitter = 1e-2;
        spec.injectors.entropy_seed = 77;
        const std::string text = write_scenario_string(spec);
        const ScenarioSpec parsed = parse_scenario_string(text);

        CHECK(parsed.scenario_id == spec.scenario_id);
        CHECK(parsed.dt_physics == spec.dt_physics);
        CHECK(parsed.log_interval == spec.log_interval);
        CHECK(parsed.max_sim_time == spec.max_sim_time);
        CHECK(parsed.stop_on_collision == spec.stop_on_collision);
        REQUIRE(parsed.actors.size() == spec.actors.size());
        for (std::size_t i = 0; i < spec.actors.size(); ++i) {
            CHECK(parsed.actors[i].actor_id == spec.actors[i].actor_id);
            CHECK(parsed.actors[i].kind == spec.actors[i].kind);
            CHECK(parsed.actors[i].start == spec.actors[i].start);
            CHECK(parsed.actors[i].cruise_speed == spec.actors[i].cruise_speed);
            CHECK(parsed.actors[i].waypoints == spec.actors[i].waypoints);
            CHECK(parsed.actors[i].goal == spec.actors[i].goal);
            CHECK(parsed.actors[i].avoidance_range == spec.actors[i].avoidance_range);
        }
        CHECK(parsed.injectors.collision_impulse_jitter == 1e-2);
        CHECK(parsed.injectors.entropy_seed == 77);

        // Canonical writer is a fixed point.
        CHECK(write_scenario_string(parsed) == text);
    }
}

TEST_CASE("scenario parser reports line numbers") {
    const std::string bad =
        "#simvar-scenario v1\n"
        "scenario_id = x\n"
        "map_bounds = 10 10\n"
        "actor {\n"
        "  id = a\n"
        "  kind = hovercraft\n"
        "}\n";
    CHECK_THROWS_WITH_AS(parse_scenario_string(bad),
                         "scenario line 6: unknown actor kind 'hovercraft'", ScenarioError);
}

TEST_CASE("scenario parser rejects structural errors") {
    CHECK_THROWS_AS(parse_scenario_string(""), ScenarioError);
    CHECK_THROWS_AS(parse_scenario_string("#simvar-scenario v2\n"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario_string("#simvar-scenario v1\nscenario_id = x\nactor {\n"),
                    ScenarioError);  // unterminated block
    CHECK_THROWS_AS(parse_scenario_string("#simvar-scenario v1\n}\n"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario_string("#simvar-scenario v1\nwhat\n"), ScenarioError);
}

TEST_CASE("blocked rects land in the navmesh") {
    const std::string text =
        "#simvar-scenario v1\n"
        "scenario_id = mesh\n"
        "map_bounds = 10 10\n"
        "max_sim_time = 5\n"
        "navmesh {\n"
        "  cell_size = 1\n"
        "  blocked_rect = 2 3 4 3\n"
        "}\n"
        "actor {\n"
        "  id = p\n"
        "  kind = pedestrian\n"
        "  start = 0.5 0.5\n"
        "  goal = 9.5 9.5\n"
        "  cruise_speed = 1\n"
        "  radius = 0.3\n"
        "}\n";
    const ScenarioSpec spec = parse_scenario_string(text);
    CHECK(spec.navmesh.blocked(GridCell{2, 3}));
    CHECK(spec.navmesh.blocked(GridCell{4, 3}));
    CHECK_FALSE(spec.navmesh.blocked(GridCell{1, 3}));
    CHECK(spec.navmesh.width() == 10);
}

TEST_CASE("comments and blank lines are ignored") {
    const std::string text =
        "#simvar-scenario v1\n"
        "# a comment\n"
        "\n"
        "scenario_id = c   # trailing comment\n"
        "map_bounds = 10 10\n"
        "max_sim_time = 5\n"
        "actor {\n"
        "  id = a\n"
        "  kind = vehicle\n"
        "  start = 1 1\n"
        "  waypoint = 1 1\n"
        "  waypoint = 9 1\n"
        "  cruise_speed = 2\n"
        "  radius = 1\n"
        "}\n";
    const ScenarioSpec spec = parse_scenario_string(text);
    CHECK(spec.scenario_id == "c");
    CHECK(spec.actors.size() == 1);
}
