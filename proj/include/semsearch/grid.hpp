#pragma once

/*! \file
 *  \brief Occupancy grid, per-cell room labels and exact cell line of sight.
 */

#include "semsearch/core.hpp"

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <span>
#include <vector>

namespace semsearch {

enum class CellState : std::int8_t { Free = 0, Occupied = 1, Unknown = -1 };

inline constexpr int kNoRoom = -1;

class GridMap {
 public:
  GridMap() = default;

  GridMap(int width, int height, double resolution,
          CellState fill = CellState::Unknown)
      : width_(width), height_(height), resolution_(resolution) {
    if (width < 1 || height < 1) throw ValidationError("grid must be at least 1x1");
    if (!(resolution > 0)) throw ValidationError("grid resolution must be positive");
    cells_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  std::size_t size() const { return cells_.size(); }

  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }

  /// Row-major: index = y * width + x.
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * width_ + c.x;
  }
  Cell cell_of(std::size_t idx) const {
    return {static_cast<int>(idx % width_), static_cast<int>(idx / width_)};
  }

  CellState at(Cell c) const { return cells_[index(c)]; }
  void set(Cell c, CellState s) { cells_[index(c)] = s; }

  bool is_free(Cell c) const { return in_bounds(c) && at(c) == CellState::Free; }

  Vec2 center(Cell c) const {
    return {(c.x + 0.5) * resolution_, (c.y + 0.5) * resolution_};
  }

  std::optional<Cell> cell_at(const Vec2& p) const {
    const Cell c{static_cast<int>(std::floor(p.x() / resolution_)),
                 static_cast<int>(std::floor(p.y() / resolution_))};
    if (!in_bounds(c)) return std::nullopt;
    return c;
  }

  /// Nearest in-bounds cell to an arbitrary position.
  Cell clamp_to_cell(const Vec2& p) const {
    const int x = static_cast<int>(std::floor(p.x() / resolution_));
    const int y = static_cast<int>(std::floor(p.y() / resolution_));
    return {std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1)};
  }

  std::span<const CellState> cells() const { return cells_; }

  std::size_t count(CellState s) const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), s));
  }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  std::vector<CellState> cells_;
};

class RoomLabels {
 public:
  RoomLabels() = default;
  RoomLabels(int width, int height, int fill = kNoRoom)
      : width_(width), height_(height),
        ids_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int at(Cell c) const { return ids_[static_cast<std::size_t>(c.y) * width_ + c.x]; }
  void set(Cell c, int room) { ids_[static_cast<std::size_t>(c.y) * width_ + c.x] = room; }
  std::span<const int> ids() const { return ids_; }

  friend bool operator==(const RoomLabels&, const RoomLabels&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<int> ids_;
};

namespace detail {

inline long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline long ceil_div(long a, long b) { return -floor_div(-a, b); }

}  // namespace detail

/// Visits every cell whose open square intersects the segment joining the
/// centers of `from` and `to`; a segment that only grazes an edge or corner
/// does not visit that cell. Sweeps the major axis column by column in exact
/// integer arithmetic. `visit` returns false to stop early; the function
/// returns false then.
template <class Visit>
bool for_each_crossed_cell(Cell from, Cell to, Visit&& visit) {
  const long dx = to.x - from.x;
  const long dy = to.y - from.y;
  const int sx = dx < 0 ? -1 : 1;
  const int sy = dy < 0 ? -1 : 1;
  const long adx = std::labs(dx);
  const long ady = std::labs(dy);
  const bool swap = ady > adx;
  const long major = swap ? ady : adx;
  const long minor = swap ? adx : ady;

  for (long k = 0; k <= major; ++k) {
    // Major-axis extent of column k in half-cell units, clipped to the segment.
    const long lo2 = std::max(0L, 2 * k - 1);
    const long hi2 = std::min(2 * major, 2 * k + 1);
    long j_min = 0;
    long j_max = 0;
    if (major > 0) {
      // Row j is crossed iff (2j-1)*major < hi2*minor and (2j+1)*major > lo2*minor.
      j_min = detail::floor_div(lo2 * minor - major, 2 * major) + 1;
      j_max = detail::ceil_div(hi2 * minor + major, 2 * major) - 1;
    }
    for (long j = j_min; j <= j_max; ++j) {
      const long u = swap ? j : k;
      const long v = swap ? k : j;
      const Cell c{from.x + sx * static_cast<int>(u), from.y + sy * static_cast<int>(v)};
      if (!visit(c)) return false;
    }
  }
  return true;
}

/// True when no cell strictly between the two endpoints satisfies `blocks`.
template <class Blocks>
bool line_of_sight(Cell from, Cell to, Blocks&& blocks) {
  return for_each_crossed_cell(from, to, [&](Cell c) {
    if (c == from || c == to) return true;
    return !blocks(c);
  });
}

}  // namespace semsearch
