#include "simvar/pathfind.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace simvar::minisim {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

struct FrontierEntry {
    double f = 0.0;
    std::uint64_t tie = 0;  // insertion sequence or random draw, per mode
    int node = 0;
};

struct StableGreater {
    bool operator()(const FrontierEntry& a, const FrontierEntry& b) const {
        if (a.f != b.f) return a.f > b.f;
        return a.tie > b.tie;
    }
};

struct HeapGreater {
    // f only: equal-priority order is whatever the binary heap does, which is
    // deterministic for identical insertion sequences.
    bool operator()(const FrontierEntry& a, const FrontierEntry& b) const { return a.f > b.f; }
};

}  // namespace

NavMesh::NavMesh(int width, int height, double cell_size)
    : width_(width), height_(height), cell_size_(cell_size) {
    if (width <= 0 || height <= 0 || cell_size <= 0.0) {
        throw PathError("navmesh dimensions and cell size must be positive");
    }
    blocked_.assign(static_cast<std::size_t>(width) * height, 0);
}

bool NavMesh::in_bounds(GridCell c) const {
    return c.cx >= 0 && c.cx < width_ && c.cy >= 0 && c.cy < height_;
}

bool NavMesh::blocked(GridCell c) const {
    return !in_bounds(c) || blocked_[static_cast<std::size_t>(c.cy) * width_ + c.cx] != 0;
}

void NavMesh::block(GridCell c) {
    if (!in_bounds(c)) throw PathError("blocked cell outside navmesh bounds");
    blocked_[static_cast<std::size_t>(c.cy) * width_ + c.cx] = 1;
}

void NavMesh::block_rect(int cx0, int cy0, int cx1, int cy1) {
    for (int cy = cy0; cy <= cy1; ++cy) {
        for (int cx = cx0; cx <= cx1; ++cx) block(GridCell{cx, cy});
    }
}

GridCell NavMesh::cell_at(double x, double y) const {
    return GridCell{static_cast<int>(std::floor(x / cell_size_)),
                    static_cast<int>(std::floor(y / cell_size_))};
}

Position NavMesh::cell_center(GridCell c) const {
    return Position{(c.cx + 0.5) * cell_size_, (c.cy + 0.5) * cell_size_, 0.0};
}

double octile_distance(GridCell a, GridCell b, double cell_size) {
    const double dx = std::abs(a.cx - b.cx);
    const double dy = std::abs(a.cy - b.cy);
    return cell_size * (std::max(dx, dy) + (kSqrt2 - 1.0) * std::min(dx, dy));
}

double path_cost(const std::vector<GridCell>& path, double cell_size) {
    double cost = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const bool diagonal =
            path[i].cx != path[i - 1].cx && path[i].cy != path[i - 1].cy;
        cost += diagonal ? kSqrt2 * cell_size : cell_size;
    }
    return cost;
}

std::vector<GridCell> find_grid_path(const NavMesh& mesh, GridCell start, GridCell goal,
                                     FrontierMode mode, std::mt19937_64& rng) {
    if (mesh.blocked(start)) throw PathError("path start is blocked or out of bounds");
    if (mesh.blocked(goal)) throw PathError("path goal is blocked or out of bounds");

    const int w = mesh.width();
    const int h = mesh.height();
    auto index = [w](GridCell c) { return c.cy * w + c.cx; };

    std::vector<double> g(static_cast<std::size_t>(w) * h,
                          std::numeric_limits<double>::infinity());
    std::vector<int> parent(static_cast<std::size_t>(w) * h, -1);
    std::vector<std::uint8_t> closed(static_cast<std::size_t>(w) * h, 0);

    std::priority_queue<FrontierEntry, std::vector<FrontierEntry>, StableGreater> stable;
    std::priority_queue<FrontierEntry, std::vector<FrontierEntry>, HeapGreater> heap;
    std::uint64_t insert_seq = 0;

    auto push = [&](int node, double f) {
        std::uint64_t tie = 0;
        switch (mode) {
            case FrontierMode::stable_insertion_order: tie = insert_seq++; break;
            case FrontierMode::heap_order_deterministic: tie = 0; break;
            case FrontierMode::random_tiebreak: tie = rng(); break;
        }
        const FrontierEntry e{f, tie, node};
        if (mode == FrontierMode::heap_order_deterministic) {
            heap.push(e);
        } else {
            stable.push(e);
        }
    };
    auto pop = [&]() {
        if (mode == FrontierMode::heap_order_deterministic) {
            FrontierEntry e = heap.top();
            heap.pop();
            return e;
        }
        FrontierEntry e = stable.top();
        stable.pop();
        return e;
    };
    auto empty = [&]() {
        return mode == FrontierMode::heap_order_deterministic ? heap.empty() : stable.empty();
    };

    // Fixed neighbor order keeps expansion deterministic outside the frontier.
    static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    const int goal_idx = index(goal);
    g[index(start)] = 0.0;
    push(index(start), octile_distance(start, goal, mesh.cell_size()));

    while (!empty()) {
        const FrontierEntry top = pop();
        if (closed[top.node]) continue;
        closed[top.node] = 1;
        if (top.node == goal_idx) break;

        const GridCell cur{top.node % w, top.node / w};
        for (int k = 0; k < 8; ++k) {
            const GridCell nb{cur.cx + kDx[k], cur.cy + kDy[k]};
            if (mesh.blocked(nb)) continue;
            const bool diagonal = kDx[k] != 0 && kDy[k] != 0;
            // No corner cutting: both orthogonal neighbors must be free.
            if (diagonal && (mesh.blocked(GridCell{cur.cx + kDx[k], cur.cy}) ||
                             mesh.blocked(GridCell{cur.cx, cur.cy + kDy[k]}))) {
                continue;
            }
            const double step = diagonal ? kSqrt2 * mesh.cell_size() : mesh.cell_size();
            const double cand = g[top.node] + step;
            const int nb_idx = index(nb);
            if (cand < g[nb_idx]) {
                g[nb_idx] = cand;
                parent[nb_idx] = top.node;
                push(nb_idx, cand + octile_distance(nb, goal, mesh.cell_size()));
            }
        }
    }

    if (!closed[goal_idx]) throw PathError("goal unreachable from start");

    std::vector<GridCell> path;
    for (int node = goal_idx; node != -1; node = parent[node]) {
        path.push_back(GridCell{node % w, node / w});
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<Position> densify(const std::vector<Position>& polyline, double spacing) {
    if (spacing <= 0.0) throw PathError("waypoint spacing must be positive");
    if (polyline.empty()) return {};
    std::vector<Position> out;
    out.push_back(polyline.front());
    if (polyline.size() == 1) return out;

    // Walk the polyline emitting a waypoint every `spacing` meters of arc
    // length. Emission arcs come from a multiplication, not repeated
    // addition, so long routes do not accumulate rounding drift.
    double carried = 0.0;
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        const Position& a = polyline[i - 1];
        const Position& b = polyline[i];
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double seg = std::hypot(dx, dy);
        if (seg == 0.0) continue;
        const double first = spacing - carried;
        std::size_t emitted = 0;
        while (true) {
            const double along = first + spacing * static_cast<double>(emitted);
            if (along > seg) break;
            const double f = along / seg;
            out.push_back(Position{a.x + f * dx, a.y + f * dy, 0.0});
            ++emitted;
        }
        carried = seg - (first + spacing * (static_cast<double>(emitted) - 1.0));
        if (emitted == 0) carried = spacing - first + seg;
    }
    const Position& last = polyline.back();
    if (std::hypot(out.back().x - last.x, out.back().y - last.y) > 1e-9) {
        out.push_back(last);
    }
    return out;
}

std::vector<Position> plan_path(const NavMesh& mesh, Position start, Position goal,
                                FrontierMode mode, std::mt19937_64& rng, double spacing) {
    const GridCell cs = mesh.cell_at(start.x, start.y);
    const GridCell cg = mesh.cell_at(goal.x, goal.y);
    if (cs == cg) return {goal};

    const std::vector<GridCell> cells = find_grid_path(mesh, cs, cg, mode, rng);
    std::vector<Position> polyline;
    polyline.push_back(start);
    for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
        polyline.push_back(mesh.cell_center(cells[i]));
    }
    polyline.push_back(goal);
    return densify(polyline, spacing);
}

}  // namespace simvar::minisim
