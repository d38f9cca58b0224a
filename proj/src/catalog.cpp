#include "simvar/catalog.hpp"

#include <algorithm>
#include <cmath>

namespace simvar::minisim {

namespace {

ScenarioSpec base_scenario(std::string id) {
    ScenarioSpec spec;
    spec.scenario_id = std::move(id);
    spec.map_w = 50.0;
    spec.map_h = 30.0;
    spec.navmesh = NavMesh(50, 30, 1.0);
    spec.dt_physics = 0.05;
    spec.log_interval = 0.1;
    spec.max_sim_time = 20.0;
    return spec;
}

ActorSpec vehicle(std::string id, Position start, Position end, double speed = 3.0) {
    ActorSpec a;
    a.actor_id = std::move(id);
    a.kind = ActorKind::vehicle;
    a.start = start;
    a.waypoints = {start, end};
    a.cruise_speed = speed;
    a.radius = 1.0;
    return a;
}

ActorSpec pedestrian(std::string id, Position start, Position goal, double speed = 1.25) {
    ActorSpec a;
    a.actor_id = std::move(id);
    a.kind = ActorKind::pedestrian;
    a.start = start;
    a.goal = goal;
    a.cruise_speed = speed;
    a.radius = 0.3;
    return a;
}

}  // namespace

std::vector<std::string> catalog_ids() {
    return {"test1", "test2", "test3", "test4", "test5", "test6"};
}

bool is_catalog_id(const std::string& id) {
    const auto ids = catalog_ids();
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

ScenarioSpec catalog_scenario(const std::string& id) {
    // T-junction analog: main road along y=15, side road along x=25.
    if (id == "test1") {
        // Crossing paths, timed to miss by ~10 m at the junction.
        ScenarioSpec spec = base_scenario(id);
        spec.actors.push_back(vehicle("car1", {2, 15, 0}, {48, 15, 0}));
        spec.actors.push_back(vehicle("car2", {25, 2, 0}, {25, 28, 0}));
        return spec;
    }
    if (id == "test2") {
        // Head-on on the main road. The bounce leaves both vehicles slow and
        // facing away from their goals, so their recovery arcs are highly
        // sensitive to post-collision velocity.
        ScenarioSpec spec = base_scenario(id);
        spec.actors.push_back(vehicle("car1", {5, 15, 0}, {45, 15, 0}));
        spec.actors.push_back(vehicle("car2", {45, 15, 0}, {5, 15, 0}));
        return spec;
    }
    if (id == "test3") {
        // Pedestrian clears the crossing long before car1 reaches it.
        ScenarioSpec spec = base_scenario(id);
        spec.actors.push_back(vehicle("car1", {2, 15, 0}, {48, 15, 0}));
        spec.actors.push_back(vehicle("car2", {25, 2, 0}, {25, 28, 0}));
        spec.actors.push_back(pedestrian("ped1", {35, 10, 0}, {35, 20, 0}));
        return spec;
    }
    if (id == "test4") {
        // car2 strikes the pedestrian at the crossing. car1 chases faster
        // from behind and rides its avoidance boundary, so car2's
        // post-collision offsets flip car1's yield pattern — coupling onto a
        // vehicle not involved in the collision.
        ScenarioSpec spec = base_scenario(id);
        ActorSpec lead = vehicle("car2", {6, 15, 0}, {47, 15, 0});
        ActorSpec trail = vehicle("car1", {0, 15, 0}, {47, 15, 0}, 3.4);
        trail.avoidance_range = 5.0;
        spec.actors.push_back(std::move(lead));
        spec.actors.push_back(std::move(trail));
        spec.actors.push_back(pedestrian("ped1", {25, 7.5, 0}, {25, 26, 0}));
        return spec;
    }
    if (id == "test5") {
        ScenarioSpec spec = base_scenario(id);
        spec.actors.push_back(pedestrian("ped1", {20, 10, 0}, {20, 20, 0}));
        spec.actors.push_back(pedestrian("ped2", {30, 20, 0}, {30, 10, 0}));
        return spec;
    }
    if (id == "test6") {
        ScenarioSpec spec = base_scenario(id);
        spec.actors.push_back(pedestrian("ped1", {20, 15, 0}, {35, 15, 0}));
        spec.actors.push_back(pedestrian("ped2", {35, 15, 0}, {20, 15, 0}));
        spec.stop_on_collision = true;
        return spec;
    }
    throw ScenarioError("unknown catalog scenario '" + id + "'");
}

TwoRouteFixture two_route_fixture() {
    TwoRouteFixture fx{NavMesh(13, 7, 1.0), GridCell{1, 3}, GridCell{11, 3}};
    fx.mesh.block_rect(3, 3, 9, 3);  // center wall, symmetric above/below
    return fx;
}

int two_route_signature(const std::vector<GridCell>& path) {
    for (const GridCell& c : path) {
        if (c.cx >= 3 && c.cx <= 9) {
            if (c.cy > 3) return 1;
            if (c.cy < 3) return -1;
        }
    }
    return 0;
}

}  // namespace simvar::minisim
