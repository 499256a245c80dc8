#pragma once

/*! \file
 *  \brief Frontier edges and visibility regions on the agent's partial map.
 */

#include "semsearch/core.hpp"
#include "semsearch/grid.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <vector>

namespace semsearch::geometry {

inline constexpr int kDefaultMinEdgeSize = 15;
inline constexpr int kDefaultRayCount = 720;
/// ray_count value selecting the exact per-cell line-of-sight test.
inline constexpr int kDenseRays = 0;

struct FrontierEdge {
  std::vector<Cell> cells;  // row-major order
  int room = kNoRoom;
  std::size_t size() const { return cells.size(); }
};

struct VisibilityRegion {
  std::vector<Cell> cells;  // row-major order
  int source = -1;

  bool contains(Cell c) const {
    return std::binary_search(cells.begin(), cells.end(), c, row_major_less);
  }
  bool empty() const { return cells.empty(); }

  static bool row_major_less(const Cell& a, const Cell& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

/// Free with at least one Unknown 8-neighbour (out-of-bounds neighbours are ignored).
inline bool is_frontier_cell(const GridMap& grid, Cell c) {
  if (grid.at(c) != CellState::Free) return false;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const Cell n{c.x + dx, c.y + dy};
      if (grid.in_bounds(n) && grid.at(n) == CellState::Unknown) return true;
    }
  return false;
}

/// Frontier cells grouped into 8-connected edges; edges smaller than
/// `min_edge_size` are dropped. Each edge takes the majority room label of
/// its labeled cells (ties to the lower id).
inline std::vector<FrontierEdge> detect_frontiers(const GridMap& grid, const RoomLabels& rooms,
                                                  int min_edge_size = kDefaultMinEdgeSize) {
  std::vector<std::uint8_t> frontier(grid.size(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i)
    frontier[i] = is_frontier_cell(grid, grid.cell_of(i)) ? 1 : 0;

  std::vector<FrontierEdge> edges;
  std::vector<std::uint8_t> seen(grid.size(), 0);
  std::deque<Cell> queue;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!frontier[i] || seen[i]) continue;
    FrontierEdge edge;
    seen[i] = 1;
    queue.push_back(grid.cell_of(i));
    while (!queue.empty()) {
      const Cell c = queue.front();
      queue.pop_front();
      edge.cells.push_back(c);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Cell n{c.x + dx, c.y + dy};
          if (!grid.in_bounds(n)) continue;
          const auto ni = grid.index(n);
          if (frontier[ni] && !seen[ni]) {
            seen[ni] = 1;
            queue.push_back(n);
          }
        }
    }
    if (static_cast<int>(edge.size()) < min_edge_size) continue;
    std::sort(edge.cells.begin(), edge.cells.end(), VisibilityRegion::row_major_less);
    std::map<int, int> votes;
    for (const Cell& c : edge.cells)
      if (rooms.at(c) != kNoRoom) ++votes[rooms.at(c)];
    int best = 0;
    for (const auto& [room, n] : votes)
      if (n > best) {
        best = n;
        edge.room = room;
      }
    edges.push_back(std::move(edge));
  }
  return edges;
}

/// Blocks rays on the agent map: Occupied and Unknown cells.
inline bool blocks_view(const GridMap& grid, Cell c) { return grid.at(c) != CellState::Free; }

namespace detail {

/// Amanatides-Woo traversal of one ray. Marks Free cells whose centre lies
/// within range until a blocking cell is entered or the ray leaves range.
inline void cast_ray(const GridMap& grid, const Vec2& origin, Cell origin_cell, double angle,
                     double max_range, std::vector<std::uint8_t>& mark) {
  const double res = grid.resolution();
  const double dx = std::cos(angle);
  const double dy = std::sin(angle);
  Cell c = origin_cell;
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const double inf = std::numeric_limits<double>::infinity();
  const double next_x = (c.x + (step_x > 0 ? 1 : 0)) * res;
  const double next_y = (c.y + (step_y > 0 ? 1 : 0)) * res;
  double t_max_x = step_x != 0 ? (next_x - origin.x()) / dx : inf;
  double t_max_y = step_y != 0 ? (next_y - origin.y()) / dy : inf;
  const double t_delta_x = step_x != 0 ? res / std::abs(dx) : inf;
  const double t_delta_y = step_y != 0 ? res / std::abs(dy) : inf;
  const double r2 = max_range * max_range;

  while (true) {
    double t_enter;
    if (t_max_x < t_max_y) {
      t_enter = t_max_x;
      t_max_x += t_delta_x;
      c.x += step_x;
    } else {
      t_enter = t_max_y;
      t_max_y += t_delta_y;
      c.y += step_y;
    }
    if (t_enter > max_range || !grid.in_bounds(c) || blocks_view(grid, c)) return;
    if ((grid.center(c) - origin).squaredNorm() <= r2) mark[grid.index(c)] = 1;
  }
}

}  // namespace detail

/// Cells from which `source` is visible. Sampled mode casts `ray_count` rays
/// at bearings 2*pi*k/ray_count from the source position; dense mode
/// (`ray_count == kDenseRays`) tests each cell centre against the source
/// cell centre with exact line of sight. Unknown cells block in both modes.
inline VisibilityRegion compute_visibility(const GridMap& grid, const Vec2& source, double max_range,
                                           int ray_count = kDefaultRayCount, int source_id = -1) {
  VisibilityRegion region;
  region.source = source_id;
  const auto source_cell = grid.cell_at(source);
  if (!source_cell) throw ValidationError("visibility source outside the map");
  std::vector<std::uint8_t> mark(grid.size(), 0);

  if (ray_count == kDenseRays) {
    const int reach = static_cast<int>(std::ceil(max_range / grid.resolution()));
    const Vec2 origin = grid.center(*source_cell);
    for (int y = std::max(0, source_cell->y - reach); y <= std::min(grid.height() - 1, source_cell->y + reach); ++y)
      for (int x = std::max(0, source_cell->x - reach); x <= std::min(grid.width() - 1, source_cell->x + reach); ++x) {
        const Cell c{x, y};
        if (grid.at(c) != CellState::Free) continue;
        if ((grid.center(c) - origin).squaredNorm() > max_range * max_range) continue;
        if (line_of_sight(*source_cell, c, [&](Cell b) { return blocks_view(grid, b); })) mark[grid.index(c)] = 1;
      }
  } else {
    if (grid.at(*source_cell) == CellState::Free) mark[grid.index(*source_cell)] = 1;
    for (int k = 0; k < ray_count; ++k) {
      const double angle = 2.0 * std::numbers::pi * (static_cast<double>(k) / static_cast<double>(ray_count));
      detail::cast_ray(grid, source, *source_cell, angle, max_range, mark);
    }
  }

  for (std::size_t i = 0; i < grid.size(); ++i)
    if (mark[i]) region.cells.push_back(grid.cell_of(i));
  return region;
}

inline nlohmann::json to_json(const VisibilityRegion& region) {
  auto cells = nlohmann::json::array();
  for (const Cell& c : region.cells) cells.push_back({c.x, c.y});
  return {{"source", region.source}, {"cells", cells}};
}

inline nlohmann::json to_json(const std::vector<FrontierEdge>& edges) {
  auto out = nlohmann::json::array();
  for (const auto& e : edges) {
    auto cells = nlohmann::json::array();
    for (const Cell& c : e.cells) cells.push_back({c.x, c.y});
    out.push_back({{"room", e.room}, {"size", e.size()}, {"cells", cells}});
  }
  return out;
}

}  // namespace semsearch::geometry
