#pragma once

/*! \file
 *  \brief Shared vocabulary: cells, 2D algebra aliases, move actions and errors.
 */

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace semsearch {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Engine used for every stochastic component. Caller-owned, one per episode.
using Rng = std::mt19937_64;

/// Integer grid coordinate. +x is east, +y is north.
struct Cell {
  int x = 0;
  int y = 0;

  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
  constexpr Cell operator+(const Cell& o) const { return {x + o.x, y + o.y}; }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class UndefinedProbabilityError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

// Clockwise from north; this is also the greedy tie-break order.
enum class MoveAction : std::uint8_t {
  North = 0,
  NorthEast,
  East,
  SouthEast,
  South,
  SouthWest,
  West,
  NorthWest,
};

inline constexpr std::array<MoveAction, 8> kAllMoves = {
    MoveAction::North, MoveAction::NorthEast, MoveAction::East,
    MoveAction::SouthEast, MoveAction::South, MoveAction::SouthWest,
    MoveAction::West, MoveAction::NorthWest};

constexpr int index_of(MoveAction a) { return static_cast<int>(a); }

constexpr Cell offset(MoveAction a) {
  constexpr std::array<Cell, 8> kOffsets = {
      Cell{0, 1}, Cell{1, 1}, Cell{1, 0}, Cell{1, -1},
      Cell{0, -1}, Cell{-1, -1}, Cell{-1, 0}, Cell{-1, 1}};
  return kOffsets[static_cast<std::size_t>(a)];
}

/// 45 degrees counter-clockwise (MoveUp -> up-left).
constexpr MoveAction rotate_left(MoveAction a) {
  return static_cast<MoveAction>((index_of(a) + 7) % 8);
}

/// 45 degrees clockwise (MoveUp -> up-right).
constexpr MoveAction rotate_right(MoveAction a) {
  return static_cast<MoveAction>((index_of(a) + 1) % 8);
}

constexpr std::string_view to_string(MoveAction a) {
  constexpr std::array<std::string_view, 8> kNames = {"N", "NE", "E", "SE",
                                                      "S", "SW", "W", "NW"};
  return kNames[static_cast<std::size_t>(a)];
}

/// Outcome distribution of a commanded move: the commanded direction or one
/// of the two directions 45 degrees either side of it.
struct MotionWeights {
  double commanded = 1.0;
  double left = 0.0;
  double right = 0.0;

  void validate() const {
    if (commanded < 0 || left < 0 || right < 0 ||
        std::abs(commanded + left + right - 1.0) > 1e-9) {
      throw ValidationError("motion weights must be a probability distribution");
    }
  }
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

inline bool is_symmetric_psd(const Mat2& m, double tol = 1e-9) {
  if (!m.allFinite()) return false;
  if (std::abs(m(0, 1) - m(1, 0)) > tol) return false;
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  return es.eigenvalues().minCoeff() >= -tol;
}

/// Draw from N(mean, cov). A zero covariance returns the mean without
/// consuming randomness.
inline Vec2 sample_gaussian(const Vec2& mean, const Mat2& cov, Rng& rng) {
  if (cov.isZero(0.0)) return mean;
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  const Vec2 scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::normal_distribution<double> n01(0.0, 1.0);
  const double a = n01(rng);
  const double b = n01(rng);
  return mean + es.eigenvectors() * Vec2(scale(0) * a, scale(1) * b);
}

}  // namespace semsearch
