#pragma once

#include <string>
#include <vector>

#include "simvar/minisim.hpp"

namespace simvar::minisim {

// Built-in scenario catalog: six scenarios covering the collision /
// no-collision matrix over vehicle and pedestrian actor mixes, at ~50 m x
// 30 m scale so repeated-run campaigns finish in seconds.
//
//   test1  two vehicles, crossing paths, no collision
//   test2  two vehicles, collision at the junction
//   test3  two vehicles and a crossing pedestrian, no collision
//   test4  vehicle hits the pedestrian; a trailing vehicle with avoidance
//          coupling is not involved in the collision
//   test5  two pedestrians, no collision
//   test6  two pedestrians, head-on collision
std::vector<std::string> catalog_ids();
bool is_catalog_id(const std::string& id);
ScenarioSpec catalog_scenario(const std::string& id);

// Symmetric map with exactly two optimal routes around a center wall; the
// A* tie-breaking fixture. Route signature: +1 above the wall, -1 below.
struct TwoRouteFixture {
    NavMesh mesh;
    GridCell start;
    GridCell goal;
};
TwoRouteFixture two_route_fixture();
int two_route_signature(const std::vector<GridCell>& path);

}  // namespace simvar::minisim
