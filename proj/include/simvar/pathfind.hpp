#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "simvar/trace.hpp"

namespace simvar::minisim {

struct GridCell {
    int cx = 0;
    int cy = 0;
    friend bool operator==(const GridCell&, const GridCell&) = default;
};

// Discretized traversable space: uniform grid, 8-connected, blocked cells
// impassable. Cell (cx, cy) covers [cx*cell, (cx+1)*cell) x [cy*cell, ...).
class NavMesh {
  public:
    NavMesh() = default;
    NavMesh(int width, int height, double cell_size);

    int width() const { return width_; }
    int height() const { return height_; }
    double cell_size() const { return cell_size_; }

    bool in_bounds(GridCell c) const;
    bool blocked(GridCell c) const;
    void block(GridCell c);
    void block_rect(int cx0, int cy0, int cx1, int cy1);  // inclusive cell range

    GridCell cell_at(double x, double y) const;
    Position cell_center(GridCell c) const;

    const std::vector<std::uint8_t>& blocked_cells() const { return blocked_; }

  private:
    int width_ = 0;
    int height_ = 0;
    double cell_size_ = 1.0;
    std::vector<std::uint8_t> blocked_;
};

// How the frontier breaks f-cost ties during node selection:
//   stable_insertion_order   — equal-priority nodes pop in insertion order
//   heap_order_deterministic — binary-heap internal order; deterministic for
//                              identical insertion sequences
//   random_tiebreak          — ties broken by entropy; may return different
//                              equal-cost paths across calls
enum class FrontierMode { stable_insertion_order, heap_order_deterministic, random_tiebreak };

class PathError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Octile distance between cell centers in meters (the A* heuristic; exact
// path cost on an empty 8-connected grid).
double octile_distance(GridCell a, GridCell b, double cell_size);

// Optimal-cost grid path from start to goal, both inclusive. `rng` is only
// consulted in random_tiebreak mode. Throws PathError when the goal is
// unreachable or an endpoint is blocked/out of bounds.
std::vector<GridCell> find_grid_path(const NavMesh& mesh, GridCell start, GridCell goal,
                                     FrontierMode mode, std::mt19937_64& rng);

// Resamples a polyline at fixed spacing, keeping the final vertex.
std::vector<Position> densify(const std::vector<Position>& polyline, double spacing);

// find_grid_path + cell centers + densification to `spacing`-spaced waypoints.
std::vector<Position> plan_path(const NavMesh& mesh, Position start, Position goal,
                                FrontierMode mode, std::mt19937_64& rng, double spacing = 0.1);

double path_cost(const std::vector<GridCell>& path, double cell_size);

}  // namespace simvar::minisim
