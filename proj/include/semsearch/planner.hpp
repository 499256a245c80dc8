#pragma once

/*! \file
 *  \brief Grid MDP, reward shaping, goal determination and RTDP.
 *
 *  States are the Free cells of the agent map. Each of the eight moves
 *  reaches the commanded neighbour or one of the two neighbours 45 degrees
 *  either side; a move whose target is not a state self-loops. Rewards are
 *  keyed on the successor state and goal states are absorbing with zero
 *  continuation value.
 */

#include "semsearch/core.hpp"
#include "semsearch/geometry.hpp"
#include "semsearch/grid.hpp"
#include "semsearch/mapping.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace semsearch::planner {

inline constexpr double kDefaultGamma = 0.95;
inline constexpr double kDefaultTau = 0.6;
inline constexpr double kDefaultEpsilon = 0.01;
inline constexpr int kDefaultTrialBudget = 2000;

struct Outcome {
  int next = 0;
  double prob = 0.0;
};

struct ActionOutcomes {
  std::array<Outcome, 3> items{};
  int count = 0;

  std::span<const Outcome> view() const { return {items.data(), static_cast<std::size_t>(count)}; }

  void add(int next, double prob) {
    for (int i = 0; i < count; ++i)
      if (items[static_cast<std::size_t>(i)].next == next) {
        items[static_cast<std::size_t>(i)].prob += prob;
        return;
      }
    items[static_cast<std::size_t>(count++)] = {next, prob};
  }
};

class MdpModel {
 public:
  int width = 0;
  int height = 0;
  double resolution = 1.0;
  double gamma = kDefaultGamma;
  MotionWeights weights;

  std::vector<Cell> states;
  std::vector<int> state_of_cell;  // -1 when the cell is not a state
  std::vector<std::array<ActionOutcomes, 8>> transitions;
  std::vector<double> reward;  // R(., ., s'), collected on entering a goal s'
  std::vector<std::uint8_t> goal;

  std::size_t num_states() const { return states.size(); }

  std::optional<int> state_of(Cell c) const {
    if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height) return std::nullopt;
    const int s = state_of_cell[static_cast<std::size_t>(c.y) * width + c.x];
    if (s < 0) return std::nullopt;
    return s;
  }

  std::span<const Outcome> outcomes(int s, MoveAction a) const {
    return transitions[static_cast<std::size_t>(s)][static_cast<std::size_t>(index_of(a))].view();
  }

  bool is_goal(int s) const { return goal[static_cast<std::size_t>(s)] != 0; }

  std::vector<int> goal_states() const {
    std::vector<int> out;
    for (std::size_t s = 0; s < goal.size(); ++s)
      if (goal[s]) out.push_back(static_cast<int>(s));
    return out;
  }

  double max_reward() const {
    double m = 0.0;
    for (double r : reward) m = std::max(m, r);
    return m;
  }

  /// Largest reward collectable on entering a goal.
  double max_goal_reward() const {
    double m = 0.0;
    for (std::size_t s = 0; s < reward.size(); ++s)
      if (goal[s]) m = std::max(m, reward[s]);
    return m;
  }

  bool operator==(const MdpModel& o) const {
    if (width != o.width || height != o.height || resolution != o.resolution || gamma != o.gamma ||
        states != o.states || reward != o.reward || goal != o.goal)
      return false;
    for (std::size_t s = 0; s < transitions.size(); ++s)
      for (std::size_t a = 0; a < 8; ++a) {
        const auto& x = transitions[s][a];
        const auto& y = o.transitions[s][a];
        if (x.count != y.count) return false;
        for (int i = 0; i < x.count; ++i) {
          const auto k = static_cast<std::size_t>(i);
          if (x.items[k].next != y.items[k].next || x.items[k].prob != y.items[k].prob) return false;
        }
      }
    return true;
  }
};

inline MdpModel build_mdp(const GridMap& grid, const MotionWeights& weights, double gamma = kDefaultGamma) {
  weights.validate();
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("discount must lie in [0, 1)");
  MdpModel m;
  m.width = grid.width();
  m.height = grid.height();
  m.resolution = grid.resolution();
  m.gamma = gamma;
  m.weights = weights;
  m.state_of_cell.assign(grid.size(), -1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.cells()[i] == CellState::Free) {
      m.state_of_cell[i] = static_cast<int>(m.states.size());
      m.states.push_back(grid.cell_of(i));
    }
  }
  if (m.states.empty()) throw PlanningError("agent map has no Free cells");

  m.transitions.resize(m.states.size());
  for (std::size_t s = 0; s < m.states.size(); ++s) {
    const Cell c = m.states[s];
    for (MoveAction a : kAllMoves) {
      auto& row = m.transitions[s][static_cast<std::size_t>(index_of(a))];
      const std::array<std::pair<MoveAction, double>, 3> parts = {
          std::pair{a, weights.commanded}, std::pair{rotate_left(a), weights.left},
          std::pair{rotate_right(a), weights.right}};
      for (const auto& [dir, p] : parts) {
        if (p <= 0.0) continue;
        const auto next = m.state_of(c + offset(dir));
        row.add(next ? *next : static_cast<int>(s), p);
      }
    }
  }
  m.reward.assign(m.states.size(), 0.0);
  m.goal.assign(m.states.size(), 0);
  return m;
}

// ---------------------------------------------------------------------------
// Discretized Gaussian position mass

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace detail

/// Probability mass of N(mean, cov) over each grid cell.
/// Diagonal covariances integrate exactly through the normal CDF; correlated
/// ones use 8x8 Gauss-Legendre quadrature per cell. A (near) zero covariance
/// is a point mass on the cell containing the mean.
class CellMass {
 public:
  CellMass(const Mat2& cov, double resolution) : cov_(cov), res_(resolution) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    const double max_eig = std::max(0.0, es.eigenvalues().maxCoeff());
    sigma_max_ = std::sqrt(max_eig);
    delta_ = sigma_max_ < 1e-9 * resolution;
    diagonal_ = cov(0, 1) == 0.0 && cov(1, 0) == 0.0;
    if (!delta_ && !diagonal_) {
      inv_ = cov.inverse();
      norm_ = 1.0 / (2.0 * std::numbers::pi * std::sqrt(cov.determinant()));
    }
  }

  bool is_delta() const { return delta_; }

  /// Cells beyond this Chebyshev radius from the mean's cell carry negligible mass.
  int radius_cells() const {
    if (delta_) return 0;
    return static_cast<int>(std::ceil(9.0 * sigma_max_ / res_)) + 1;
  }

  double operator()(const Vec2& mean, Cell c) const {
    const double x0 = c.x * res_;
    const double y0 = c.y * res_;
    if (delta_) {
      const bool inside = mean.x() >= x0 && mean.x() < x0 + res_ && mean.y() >= y0 && mean.y() < y0 + res_;
      return inside ? 1.0 : 0.0;
    }
    if (diagonal_) return axis_mass(mean.x(), cov_(0, 0), x0) * axis_mass(mean.y(), cov_(1, 1), y0);
    // 8-point Gauss-Legendre on [-1, 1].
    static constexpr std::array<double, 8> kNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                     -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                     0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> kWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                       0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                       0.2223810344533745, 0.1012285362903763};
    const double half = 0.5 * res_;
    double sum = 0.0;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        const Vec2 d(x0 + half * (1.0 + kNodes[i]) - mean.x(), y0 + half * (1.0 + kNodes[j]) - mean.y());
        sum += kWeights[i] * kWeights[j] * std::exp(-0.5 * d.dot(inv_ * d));
      }
    return sum * norm_ * half * half;
  }

 private:
  double axis_mass(double mean, double var, double lo) const {
    if (var <= 0.0) return (mean >= lo && mean < lo + res_) ? 1.0 : 0.0;
    const double s = std::sqrt(var);
    return detail::normal_cdf((lo + res_ - mean) / s) - detail::normal_cdf((lo - mean) / s);
  }

  Mat2 cov_;
  Mat2 inv_ = Mat2::Zero();
  double res_;
  double sigma_max_ = 0.0;
  double norm_ = 0.0;
  bool delta_ = true;
  bool diagonal_ = true;
};

namespace detail {

/// R(s') = sum over cells of mass(cell | mean s') * weight(cell). State means
/// sit on cell centres, so the mass is one kernel over cell offsets; it is
/// scattered from the weighted cells.
inline void apply_weighted_mass(MdpModel& m, const std::vector<double>& cell_weight, const Mat2& pose_cov) {
  const CellMass mass(pose_cov, m.resolution);
  const int k = mass.radius_cells();
  const int span = 2 * k + 1;
  std::vector<double> kernel(static_cast<std::size_t>(span) * span);
  const Vec2 anchor((k + 0.5) * m.resolution, (k + 0.5) * m.resolution);
  for (int dy = -k; dy <= k; ++dy)
    for (int dx = -k; dx <= k; ++dx)
      kernel[static_cast<std::size_t>(dy + k) * span + (dx + k)] = mass(anchor, Cell{k + dx, k + dy});

  std::fill(m.reward.begin(), m.reward.end(), 0.0);
  for (int cy = 0; cy < m.height; ++cy)
    for (int cx = 0; cx < m.width; ++cx) {
      const double w = cell_weight[static_cast<std::size_t>(cy) * m.width + cx];
      if (w == 0.0) continue;
      for (int dy = -k; dy <= k; ++dy)
        for (int dx = -k; dx <= k; ++dx) {
          const Cell s{cx - dx, cy - dy};
          if (s.x < 0 || s.y < 0 || s.x >= m.width || s.y >= m.height) continue;
          const auto si = m.state_of(s);
          if (!si) continue;
          m.reward[static_cast<std::size_t>(*si)] += w * kernel[static_cast<std::size_t>(dy + k) * span + (dx + k)];
        }
    }
}

}  // namespace detail

using RoomProbabilities = std::map<int, double>;

/// Frontier reward: R(s') = sum_j P(x in e_j | s') * P(target | evidence, r_j) * |e_j|.
/// Goals become every frontier cell that is a state.
inline MdpModel shape_frontier_reward(MdpModel m, std::span<const geometry::FrontierEdge> frontiers,
                                      const RoomProbabilities& room_probs, const Mat2& pose_cov) {
  std::vector<double> weight(static_cast<std::size_t>(m.width) * m.height, 0.0);
  std::fill(m.goal.begin(), m.goal.end(), 0);
  for (const auto& edge : frontiers) {
    const auto it = room_probs.find(edge.room);
    if (it == room_probs.end()) throw ValidationError("no room probability for room " + std::to_string(edge.room));
    const double w = it->second * static_cast<double>(edge.size());
    for (const Cell& c : edge.cells) {
      weight[static_cast<std::size_t>(c.y) * m.width + c.x] += w;
      if (const auto s = m.state_of(c)) m.goal[static_cast<std::size_t>(*s)] = 1;
    }
  }
  detail::apply_weighted_mass(m, weight, pose_cov);
  return m;
}

/// Visibility reward: R(s') = P(x in V | s'). Goals are V's cells that are states.
inline MdpModel shape_visibility_reward(MdpModel m, const geometry::VisibilityRegion& vis, const Mat2& pose_cov) {
  std::vector<double> weight(static_cast<std::size_t>(m.width) * m.height, 0.0);
  std::fill(m.goal.begin(), m.goal.end(), 0);
  for (const Cell& c : vis.cells) {
    weight[static_cast<std::size_t>(c.y) * m.width + c.x] = 1.0;
    if (const auto s = m.state_of(c)) m.goal[static_cast<std::size_t>(*s)] = 1;
  }
  detail::apply_weighted_mass(m, weight, pose_cov);
  return m;
}

// ---------------------------------------------------------------------------
// Goal determination

struct Goal {
  enum class Kind { Explore, Observe, Done, Exhausted };
  Kind kind = Kind::Explore;
  std::optional<int> object;

  friend bool operator==(const Goal&, const Goal&) = default;
};

inline std::string_view to_string(Goal::Kind k) {
  switch (k) {
    case Goal::Kind::Explore: return "explore";
    case Goal::Kind::Observe: return "observe";
    case Goal::Kind::Done: return "done";
    case Goal::Kind::Exhausted: return "exhausted";
  }
  return "?";
}

inline Goal select_goal(const mapping::ObjectMap& objects, int target_class, double tau, double epsilon,
                        std::span<const geometry::FrontierEdge> frontiers) {
  if (const auto oi = mapping::object_of_interest(objects, target_class)) {
    const double p = objects.find(*oi)->class_dist.at(static_cast<std::size_t>(target_class));
    if (p >= 1.0 - epsilon) return {Goal::Kind::Done, oi};
    if (p > tau) return {Goal::Kind::Observe, oi};
  }
  if (!frontiers.empty()) return {Goal::Kind::Explore, std::nullopt};
  return {Goal::Kind::Exhausted, std::nullopt};
}

// ---------------------------------------------------------------------------
// Values and RTDP

struct ValueTable {
  std::vector<double> values;
  std::vector<int> visits;

  friend bool operator==(const ValueTable&, const ValueTable&) = default;
};

/// Upper bound on any state value: goals absorb, so a trajectory collects at
/// most one goal reward.
inline double optimistic_value(const MdpModel& m) { return m.max_goal_reward(); }

/// Admissible start values: a state d moves from the nearest goal collects at
/// most gamma^(d-1) * max goal reward. States that cannot reach a goal get 0.
inline ValueTable initial_values(const MdpModel& m) {
  ValueTable t;
  const double v0 = optimistic_value(m);
  const std::size_t n = m.num_states();
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (std::size_t s = 0; s < n; ++s)
    if (m.goal[s]) {
      dist[s] = 0;
      queue.push_back(static_cast<int>(s));
    }
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    const Cell c = m.states[static_cast<std::size_t>(s)];
    for (MoveAction a : kAllMoves) {
      const auto nb = m.state_of(c + offset(a));
      if (nb && dist[static_cast<std::size_t>(*nb)] < 0) {
        dist[static_cast<std::size_t>(*nb)] = dist[static_cast<std::size_t>(s)] + 1;
        queue.push_back(*nb);
      }
    }
  }
  t.values.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (m.goal[s] || dist[s] < 0) t.values[s] = 0.0;
    else t.values[s] = v0 * std::pow(m.gamma, std::max(0, dist[s] - 1));
  }
  t.visits.assign(n, 0);
  return t;
}

inline double q_value(const MdpModel& m, const ValueTable& t, int s, MoveAction a) {
  double q = 0.0;
  for (const auto& o : m.outcomes(s, a)) {
    const auto n = static_cast<std::size_t>(o.next);
    q += o.prob * ((m.goal[n] ? m.reward[n] : 0.0) + m.gamma * t.values[n]);
  }
  return q;
}

namespace detail {

inline bool strictly_better(double q, double best) {
  return q > best + 1e-12 * std::max(1.0, std::abs(best));
}

}  // namespace detail

struct Lookahead {
  MoveAction action = MoveAction::North;
  double value = 0.0;
};

/// Best action and its Q-value; ties keep the earlier action in N, NE, ..., NW order.
inline Lookahead lookahead(const MdpModel& m, const ValueTable& t, int s) {
  Lookahead best{MoveAction::North, q_value(m, t, s, MoveAction::North)};
  for (std::size_t i = 1; i < kAllMoves.size(); ++i) {
    const double q = q_value(m, t, s, kAllMoves[i]);
    if (detail::strictly_better(q, best.value)) best = {kAllMoves[i], q};
  }
  return best;
}

/// Greedy policy. Goal states answer North.
inline MoveAction greedy_action(const ValueTable& t, const MdpModel& m, int s) {
  if (m.is_goal(s)) return MoveAction::North;
  return lookahead(m, t, s).action;
}

/// Bellman backup of one state; returns the action it found best.
inline MoveAction backup(const MdpModel& m, ValueTable& t, int s, double* change = nullptr) {
  const auto idx = static_cast<std::size_t>(s);
  if (m.goal[idx]) {
    t.values[idx] = 0.0;
    if (change) *change = 0.0;
    return MoveAction::North;
  }
  const auto best = lookahead(m, t, s);
  if (change) *change = std::abs(best.value - t.values[idx]);
  t.values[idx] = best.value;
  ++t.visits[idx];
  return best.action;
}

struct RtdpBudget {
  int max_trials = kDefaultTrialBudget;
  /// Wall-clock cap in seconds; <= 0 disables it.
  double max_seconds = 0.0;
  /// 0 selects 4 * (width + height).
  int depth_cap = 0;
};

struct RtdpStats {
  int trials = 0;
  long backups = 0;
  double last_trial_max_change = 0.0;
};

/// Runs RTDP trials from `start`: greedy action on the current values,
/// Bellman backup of every visited state (forward, then once more in
/// reverse), sampled successor, until a goal or the depth cap.
inline RtdpStats rtdp_improve(const MdpModel& m, ValueTable& t, int start, const RtdpBudget& budget, Rng& rng) {
  if (start < 0 || static_cast<std::size_t>(start) >= m.num_states()) throw ValidationError("start is not a state");
  if (std::none_of(m.goal.begin(), m.goal.end(), [](std::uint8_t g) { return g != 0; }))
    throw PlanningError("no goal states to plan toward");
  if (t.values.size() != m.num_states()) throw ValidationError("value table does not match the MDP");

  RtdpStats stats;
  if (m.is_goal(start)) {
    t.values[static_cast<std::size_t>(start)] = 0.0;
    return stats;
  }
  const int depth_cap = budget.depth_cap > 0 ? budget.depth_cap : 4 * (m.width + m.height);
  const auto t0 = std::chrono::steady_clock::now();
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<int> path;
  path.reserve(static_cast<std::size_t>(depth_cap));

  while (stats.trials < budget.max_trials) {
    if (budget.max_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= budget.max_seconds)
      break;
    path.clear();
    double max_change = 0.0;
    int s = start;
    for (int depth = 0; depth < depth_cap && !m.is_goal(s); ++depth) {
      path.push_back(s);
      double change = 0.0;
      const MoveAction a = backup(m, t, s, &change);
      max_change = std::max(max_change, change);
      ++stats.backups;
      const auto out = m.outcomes(s, a);
      double draw = u01(rng);
      int next = out.back().next;
      for (const auto& o : out) {
        if (draw < o.prob) {
          next = o.next;
          break;
        }
        draw -= o.prob;
      }
      s = next;
    }
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      double change = 0.0;
      backup(m, t, *it, &change);
      max_change = std::max(max_change, change);
      ++stats.backups;
    }
    stats.last_trial_max_change = max_change;
    ++stats.trials;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Adaptation

struct RewardShape {
  enum class Kind { Frontier, Visibility };
  Kind kind = Kind::Frontier;
  std::vector<geometry::FrontierEdge> frontiers;
  RoomProbabilities room_probs;
  geometry::VisibilityRegion visibility;
  Mat2 pose_cov = Mat2::Zero();
};

inline MdpModel apply_shape(MdpModel m, const RewardShape& shape) {
  if (shape.kind == RewardShape::Kind::Frontier)
    return shape_frontier_reward(std::move(m), shape.frontiers, shape.room_probs, shape.pose_cov);
  return shape_visibility_reward(std::move(m), shape.visibility, shape.pose_cov);
}

/// Rebuilds states, transitions, rewards and goals from the new map. Values
/// of states that persist (and were not goals) are carried over, capped at
/// the new admissible start value; other states start at that value; goals at 0.
inline std::pair<MdpModel, ValueTable> adapt(const MdpModel* old_mdp, const ValueTable* old_table,
                                             const GridMap& new_grid, const RewardShape& shape,
                                             const MotionWeights& weights, double gamma) {
  MdpModel m = apply_shape(build_mdp(new_grid, weights, gamma), shape);
  ValueTable t = initial_values(m);
  if (old_mdp && old_table && old_table->values.size() == old_mdp->num_states()) {
    for (std::size_t s = 0; s < m.num_states(); ++s) {
      if (m.goal[s]) continue;
      const auto old = old_mdp->state_of(m.states[s]);
      // A former goal's 0 is the absorbing convention, not an estimate.
      if (!old || old_mdp->is_goal(*old)) continue;
      const auto o = static_cast<std::size_t>(*old);
      t.values[s] = std::min(old_table->values[o], t.values[s]);
      t.visits[s] = old_table->visits[o];
    }
  }
  return {std::move(m), std::move(t)};
}

}  // namespace semsearch::planner
