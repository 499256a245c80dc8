#pragma once

/*! \file
 *  \brief Episode loop, evaluation metrics, baselines and the benchmark runner.
 *
 *  One step of an episode: sense, update the fused map, stop if the object of
 *  interest reaches 1 - epsilon, otherwise (re)form a goal when needed,
 *  improve the policy, act.
 */

#include "semsearch/builtin_library.hpp"
#include "semsearch/core.hpp"
#include "semsearch/geometry.hpp"
#include "semsearch/mapping.hpp"
#include "semsearch/planner.hpp"
#include "semsearch/semantics.hpp"
#include "semsearch/world.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

namespace semsearch::harness {

enum class Method { Ours, FeSs, OursNs };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Ours: return "ours";
    case Method::FeSs: return "fess";
    case Method::OursNs: return "ours-ns";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "ours" || s == "Ours") return Method::Ours;
  if (s == "fess" || s == "fe-ss" || s == "FE-SS") return Method::FeSs;
  if (s == "ours-ns" || s == "ours_ns" || s == "Ours-NS") return Method::OursNs;
  throw ValidationError("unknown method: " + std::string(s));
}

/// splitmix64; derives independent stream seeds from (seed, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ScenarioConfig {
  /// Environment document, already parsed.
  nlohmann::json environment;
  std::string target = "towel";
  double epsilon = planner::kDefaultEpsilon;
  double tau = planner::kDefaultTau;
  double lambda = 0.5;
  double gamma = planner::kDefaultGamma;
  double room_prior = semantics::kDefaultRoomPrior;
  int step_budget = 2000;
  int min_edge_size = geometry::kDefaultMinEdgeSize;
  world::SensorConfig sensor;
  /// Agent's detector model; empty means the world's true alphas.
  std::vector<std::vector<double>> agent_alphas;
  MotionWeights motion{0.8, 0.1, 0.1};
  Method method = Method::Ours;
  std::uint64_t seed = 0;
  std::optional<Cell> start;
  int trials_per_replan = planner::kDefaultTrialBudget;
  int trials_per_step = 100;
  /// Networks; empty selects the built-in library.
  std::vector<semantics::BayesianNetwork> networks;
  /// When false every planning-time field is written as 0.
  bool wall_clock = true;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
    if (step_budget <= 0) throw ValidationError("step budget must be positive");
    if (!(tau >= 0.0 && tau < 1.0)) throw ValidationError("tau must lie in [0, 1)");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ValidationError("lambda must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in [0, 1)");
    motion.validate();
  }
};

inline Mat2 diag2(double a, double b) {
  Mat2 m = Mat2::Zero();
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

/// Defaults used when a scenario omits the sensor block.
inline world::SensorConfig default_sensor(std::size_t num_classes) {
  world::SensorConfig s;
  s.max_range = 3.0;
  s.ray_count = geometry::kDefaultRayCount;
  s.range_bearing_cov = diag2(0.05 * 0.05, 0.02 * 0.02);
  s.pose_noise_cov = diag2(0.02 * 0.02, 0.02 * 0.02);
  s.detector_alphas = world::peaked_alphas(num_classes, 4.0);
  return s;
}

/// Scenario document. `environment` is a path (relative to `base_dir`) or an
/// inline environment object.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ScenarioConfig cfg;
  try {
    const auto& env = j.at("environment");
    if (env.is_string()) {
      std::filesystem::path p = env.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      std::ifstream in(p);
      if (!in) throw ParseError("cannot open environment file " + p.string());
      try {
        cfg.environment = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("environment is not valid JSON: ") + e.what());
      }
    } else {
      cfg.environment = env;
    }
    const auto classes = cfg.environment.at("classes").get<std::vector<std::string>>();
    cfg.sensor = default_sensor(classes.size());

    cfg.target = j.value("target", cfg.target);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.tau = j.value("tau", cfg.tau);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.room_prior = j.value("room_prior", cfg.room_prior);
    cfg.step_budget = j.value("step_budget", cfg.step_budget);
    cfg.min_edge_size = j.value("min_edge_size", cfg.min_edge_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.method = method_from_string(j.value("method", std::string("ours")));
    cfg.wall_clock = j.value("wall_clock", cfg.wall_clock);
    if (j.contains("start")) cfg.start = Cell{j["start"].at(0).get<int>(), j["start"].at(1).get<int>()};
    if (j.contains("motion_weights")) {
      const auto w = j["motion_weights"].get<std::vector<double>>();
      if (w.size() != 3) throw ParseError("motion_weights needs three entries");
      cfg.motion = {w[0], w[1], w[2]};
    }
    if (j.contains("sensor")) {
      const auto& s = j["sensor"];
      cfg.sensor.max_range = s.value("max_range", cfg.sensor.max_range);
      cfg.sensor.ray_count = s.value("ray_count", cfg.sensor.ray_count);
      if (s.contains("fov_deg")) cfg.sensor.field_of_view = s["fov_deg"].get<double>() * std::numbers::pi / 180.0;
      const double rs = s.value("range_std", std::sqrt(cfg.sensor.range_bearing_cov(0, 0)));
      const double bs = s.value("bearing_std", std::sqrt(cfg.sensor.range_bearing_cov(1, 1)));
      cfg.sensor.range_bearing_cov = diag2(rs * rs, bs * bs);
      const double ps = s.value("pose_std", std::sqrt(cfg.sensor.pose_noise_cov(0, 0)));
      cfg.sensor.pose_noise_cov = diag2(ps * ps, ps * ps);
      if (s.contains("detector_alphas")) {
        cfg.sensor.detector_alphas = s["detector_alphas"].get<std::vector<std::vector<double>>>();
      } else if (s.contains("detector_peak")) {
        cfg.sensor.detector_alphas = world::peaked_alphas(classes.size(), s["detector_peak"].get<double>());
      }
      cfg.sensor.false_positive_rate = s.value("false_positive_rate", 0.0);
    }
    if (j.contains("agent_detector_peak"))
      cfg.agent_alphas = world::peaked_alphas(classes.size(), j["agent_detector_peak"].get<double>());
    if (j.contains("planner")) {
      cfg.trials_per_replan = j["planner"].value("trials_per_replan", cfg.trials_per_replan);
      cfg.trials_per_step = j["planner"].value("trials_per_step", cfg.trials_per_step);
    }
    if (j.contains("networks") && j["networks"].is_array()) {
      for (const auto& n : j["networks"]) {
        if (n.is_string()) {
          std::filesystem::path p = n.get<std::string>();
          if (p.is_relative()) p = base_dir / p;
          std::ifstream in(p);
          if (!in) throw ParseError("cannot open network file " + p.string());
          cfg.networks.push_back(semantics::BayesianNetwork::from_json(nlohmann::json::parse(in)));
        } else {
          cfg.networks.push_back(semantics::BayesianNetwork::from_json(n));
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricSample {
  int step = 0;
  std::size_t n_objects = 0;
  double mean_error = 0.0;
  double median_error = 0.0;
  double cross_entropy = 0.0;
  double class_entropy = 0.0;
  double a_opt = 0.0;
  double d_opt = 0.0;
  double e_opt = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Position error, class cross-entropy and entropy, and A/D/E-optimality of
/// the position covariances, averaged over objects matched to ground truth.
/// An empty map yields a sample with n_objects = 0.
inline MetricSample mapping_metrics(const mapping::ObjectMap& map, const world::Environment& env) {
  MetricSample out;
  std::vector<double> errors;
  double ce = 0.0;
  double ent = 0.0;
  double a = 0.0;
  double d = 0.0;
  double e = 0.0;
  for (const auto& o : map) {
    const auto* gt = env.find_object(o.truth_id);
    if (!gt) continue;
    errors.push_back((o.mu - gt->position).norm());
    const double p_true = o.class_dist.at(static_cast<std::size_t>(gt->true_class));
    ce -= std::log(std::max(p_true, 1e-300));
    for (double p : o.class_dist)
      if (p > 0.0) ent -= p * std::log(p);
    Eigen::SelfAdjointEigenSolver<Mat2> es(o.sigma);
    const Vec2 ev = es.eigenvalues();
    a += ev.sum();
    d += ev.prod();
    e += ev.maxCoeff();
  }
  out.n_objects = errors.size();
  if (errors.empty()) return out;
  const double n = static_cast<double>(errors.size());
  double sum = 0.0;
  for (double x : errors) sum += x;
  out.mean_error = sum / n;
  out.median_error = median(errors);
  out.cross_entropy = ce / n;
  out.class_entropy = ent / n;
  out.a_opt = a / n;
  out.d_opt = d / n;
  out.e_opt = e / n;
  return out;
}

struct SplEntry {
  bool success = false;
  double shortest = 0.0;
  double taken = 0.0;
};

/// (1/N) sum S_i l_i / max(p_i, l_i). A success with l = p = 0 counts 1.
inline double spl(const std::vector<SplEntry>& episodes) {
  if (episodes.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& e : episodes) {
    if (!e.success) continue;
    const double denom = std::max(e.taken, e.shortest);
    sum += denom > 0.0 ? e.shortest / denom : 1.0;
  }
  return sum / static_cast<double>(episodes.size());
}

/// 8-connected Dijkstra over cells accepted by `passable`; diagonal steps cost
/// sqrt(2). Distances are in cells (infinity when unreachable).
template <class Passable>
std::vector<double> grid_distances(int width, int height, std::span<const Cell> sources, Passable&& passable) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(width) * height, inf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const Cell& c : sources) {
    const auto i = static_cast<std::size_t>(c.y) * width + c.x;
    dist[i] = 0.0;
    pq.push({0.0, static_cast<int>(i)});
  }
  while (!pq.empty()) {
    const auto [d, i] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(i)]) continue;
    const Cell c{i % width, i / width};
    for (MoveAction a : kAllMoves) {
      const Cell n = c + offset(a);
      if (n.x < 0 || n.y < 0 || n.x >= width || n.y >= height || !passable(n)) continue;
      const double step = (index_of(a) % 2) ? std::numbers::sqrt2 : 1.0;
      const auto ni = static_cast<std::size_t>(n.y) * width + n.x;
      if (d + step < dist[ni]) {
        dist[ni] = d + step;
        pq.push({d + step, static_cast<int>(ni)});
      }
    }
  }
  return dist;
}

/// Cells of the ground-truth map from which any instance of `target_class`
/// would be detected.
inline std::vector<Cell> target_visibility_cells(const world::Environment& env, int target_class, double max_range) {
  std::vector<Cell> out;
  const GridMap& map = env.map;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Cell c = map.cell_of(i);
    if (map.at(c) != CellState::Free) continue;
    for (const auto& o : env.objects) {
      if (o.true_class != target_class) continue;
      const Cell oc = *map.cell_at(o.position);
      if ((o.position - map.center(c)).norm() > max_range) continue;
      if (world::cell_visible(map, c, oc, max_range)) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

/// Shortest path length (m) from `start` to the nearest cell that sees a target instance.
inline double shortest_path_to_target(const world::Environment& env, Cell start, int target_class, double max_range) {
  const auto goals = target_visibility_cells(env, target_class, max_range);
  if (goals.empty()) return std::numeric_limits<double>::infinity();
  const auto dist = grid_distances(env.map.width(), env.map.height(), goals,
                                   [&](Cell c) { return env.map.at(c) == CellState::Free; });
  return dist[env.map.index(start)] * env.map.resolution();
}

// ---------------------------------------------------------------------------
// Episodes

struct StepRecord {
  int step = 0;
  Cell true_cell;
  world::RobotPoseBelief belief;
  planner::Goal goal;
  std::optional<MoveAction> action;
  std::vector<world::DetectionEvent> detections;
  int trials = 0;
  double start_value = 0.0;
  bool replanned = false;
  std::size_t n_objects = 0;
  /// Frontier cell the greedy baseline is heading for.
  std::optional<Cell> target_cell;
  /// Room probabilities used when the frontier reward was (re)built.
  planner::RoomProbabilities room_probs;
};

struct EpisodeLog {
  Method method = Method::Ours;
  std::uint64_t seed = 0;
  std::string target;
  Cell start;
  std::vector<StepRecord> steps;
  std::vector<MetricSample> metrics;
  bool success = false;
  std::string stop_reason;
  int steps_used = 0;
  double path_length_m = 0.0;
  double planning_time_s = 0.0;
  double shortest_path_m = 0.0;
  std::optional<int> identified_object;
  mapping::FusedMap final_map;
  std::vector<std::string> class_set;
};

namespace detail {

inline Cell nearest_free(const GridMap& grid, Cell c) {
  if (grid.in_bounds(c) && grid.at(c) == CellState::Free) return c;
  std::optional<Cell> best;
  int best_d2 = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Cell k = grid.cell_of(i);
    if (grid.at(k) != CellState::Free) continue;
    const int d2 = (k.x - c.x) * (k.x - c.x) + (k.y - c.y) * (k.y - c.y);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best.value_or(c);
}

inline MoveAction direction_to(Cell from, Cell to) {
  for (MoveAction a : kAllMoves)
    if (from + offset(a) == to) return a;
  return MoveAction::North;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point t0_;
};

/// Per-episode agent: fused map plus the method-specific planning state.
class Agent {
 public:
  Agent(const ScenarioConfig& cfg, const world::Environment& env, const std::vector<semantics::BayesianNetwork>& nets,
        int target)
      : cfg_(cfg), env_(env), nets_(nets), target_(target),
        fused_(mapping::FusedMap::unknown_like(env.map)),
        model_{cfg.agent_alphas.empty() ? cfg.sensor.detector_alphas : cfg.agent_alphas},
        rng_(derive_seed(cfg.seed, 2)) {}

  mapping::FusedMap& fused() { return fused_; }

  void perceive(const world::SensingResult& sensed) {
    mapping::reveal(fused_, sensed.revealed);
    for (const auto& det : sensed.detections)
      mapping::integrate_detection(fused_, sensed.pose, det, cfg_.sensor.range_bearing_cov, model_);
    mapping::refresh_rooms(fused_);
  }

  double room_probability(int room) const {
    if (cfg_.method == Method::OursNs) return 1.0;
    if (room == kNoRoom) return cfg_.room_prior;
    const auto ev = semantics::extract_evidence(fused_.objects, room, cfg_.lambda);
    return semantics::infer_target_room_probability(cfg_.target, semantics::evidence_names(ev, env_.class_set), nets_,
                                                    cfg_.room_prior);
  }

  planner::RoomProbabilities room_probabilities(std::span<const geometry::FrontierEdge> frontiers) const {
    planner::RoomProbabilities probs;
    for (const auto& e : frontiers)
      if (!probs.count(e.room)) probs[e.room] = room_probability(e.room);
    return probs;
  }

  /// Chooses the next move, or nullopt when there is nothing left to explore.
  std::optional<MoveAction> decide(Cell here, const world::RobotPoseBelief& pose, StepRecord& rec, double& plan_time) {
    const auto frontiers = geometry::detect_frontiers(fused_.grid, fused_.rooms, cfg_.min_edge_size);
    return cfg_.method == Method::FeSs ? decide_frontier_greedy(here, frontiers, rec, plan_time)
                                       : decide_mdp(here, pose, frontiers, rec, plan_time);
  }

 private:
  std::optional<MoveAction> decide_mdp(Cell here, const world::RobotPoseBelief& pose,
                                       const std::vector<geometry::FrontierEdge>& frontiers, StepRecord& rec,
                                       double& plan_time) {
    planner::Goal goal = planner::select_goal(fused_.objects, target_, cfg_.tau, cfg_.epsilon, frontiers);
    geometry::VisibilityRegion vis;
    if (goal.kind == planner::Goal::Kind::Observe) {
      const auto* o = fused_.objects.find(*goal.object);
      if (fused_.grid.cell_at(o->mu))
        vis = geometry::compute_visibility(fused_.grid, o->mu, cfg_.sensor.max_range, cfg_.sensor.ray_count, o->id);
      if (vis.empty())
        goal = frontiers.empty() ? planner::Goal{planner::Goal::Kind::Exhausted, std::nullopt}
                                 : planner::Goal{planner::Goal::Kind::Explore, std::nullopt};
    }
    rec.goal = goal;
    if (goal.kind == planner::Goal::Kind::Exhausted || goal.kind == planner::Goal::Kind::Done) return std::nullopt;

    const Cell cell = nearest_free(fused_.grid, here);
    std::optional<int> s = mdp_ ? mdp_->state_of(cell) : std::nullopt;
    const bool replan = !mdp_ || !goal_ || !(*goal_ == goal) || !s || mdp_->is_goal(*s);
    const Stopwatch watch(cfg_.wall_clock);
    int budget = cfg_.trials_per_step;
    if (replan) {
      planner::RewardShape shape;
      shape.pose_cov = pose.covariance;
      if (goal.kind == planner::Goal::Kind::Observe) {
        shape.kind = planner::RewardShape::Kind::Visibility;
        shape.visibility = std::move(vis);
      } else {
        shape.kind = planner::RewardShape::Kind::Frontier;
        shape.frontiers = frontiers;
        shape.room_probs = room_probabilities(frontiers);
        rec.room_probs = shape.room_probs;
      }
      const bool warm = mdp_ && goal_ && goal_->kind == goal.kind && goal_->object == goal.object;
      auto [m, t] = planner::adapt(warm ? &*mdp_ : nullptr, warm ? &table_ : nullptr, fused_.grid, shape,
                                   cfg_.motion, cfg_.gamma);
      mdp_ = std::move(m);
      table_ = std::move(t);
      goal_ = goal;
      s = mdp_->state_of(cell);
      budget = cfg_.trials_per_replan;
      rec.replanned = true;
    }
    if (!s) return std::nullopt;
    if (!mdp_->goal_states().empty()) {
      rec.trials = planner::rtdp_improve(*mdp_, table_, *s, {budget, 0.0, 0}, rng_).trials;
    }
    rec.start_value = table_.values[static_cast<std::size_t>(*s)];
    const MoveAction a = planner::greedy_action(table_, *mdp_, *s);
    plan_time += watch.seconds();
    return a;
  }

  std::optional<MoveAction> decide_frontier_greedy(Cell here, const std::vector<geometry::FrontierEdge>& frontiers,
                                                   StepRecord& rec, double& plan_time) {
    rec.goal = {frontiers.empty() ? planner::Goal::Kind::Exhausted : planner::Goal::Kind::Explore, std::nullopt};
    if (frontiers.empty()) return std::nullopt;
    const Stopwatch watch(cfg_.wall_clock);
    const GridMap& grid = fused_.grid;
    const Cell cell = nearest_free(grid, here);
    const std::array<Cell, 1> src = {cell};
    const auto dist = grid_distances(grid.width(), grid.height(), src, [&](Cell c) { return grid.at(c) == CellState::Free; });

    const bool target_valid = fe_target_ && *fe_target_ != cell && geometry::is_frontier_cell(grid, *fe_target_) &&
                              std::isfinite(dist[grid.index(*fe_target_)]);
    if (!target_valid) {
      fe_target_.reset();
      double best_score = -1.0;
      const auto probs = room_probabilities(frontiers);
      rec.room_probs = probs;
      for (const auto& e : frontiers) {
        std::optional<Cell> nearest;
        double nd = std::numeric_limits<double>::infinity();
        for (const Cell& c : e.cells)
          if (dist[grid.index(c)] < nd) {
            nd = dist[grid.index(c)];
            nearest = c;
          }
        if (!nearest || *nearest == cell) continue;
        const double score = probs.at(e.room) * static_cast<double>(e.size()) / (1.0 + nd * grid.resolution());
        if (score > best_score) {
          best_score = score;
          fe_target_ = nearest;
        }
      }
      rec.replanned = true;
    }
    if (!fe_target_) {
      plan_time += watch.seconds();
      return std::nullopt;
    }
    // Walk back from the target along decreasing distance to find the first move.
    const std::array<Cell, 1> goal_src = {*fe_target_};
    const auto to_goal =
        grid_distances(grid.width(), grid.height(), goal_src, [&](Cell c) { return grid.at(c) == CellState::Free; });
    MoveAction best = MoveAction::North;
    double best_d = std::numeric_limits<double>::infinity();
    for (MoveAction a : kAllMoves) {
      const Cell n = cell + offset(a);
      if (!grid.in_bounds(n) || grid.at(n) != CellState::Free) continue;
      const double step = (index_of(a) % 2) ? std::numbers::sqrt2 : 1.0;
      const double d = to_goal[grid.index(n)] + step;
      if (d < best_d - 1e-12) {
        best_d = d;
        best = a;
      }
    }
    rec.start_value = best_d * grid.resolution();
    rec.target_cell = fe_target_;
    plan_time += watch.seconds();
    return best;
  }

  const ScenarioConfig& cfg_;
  const world::Environment& env_;
  const std::vector<semantics::BayesianNetwork>& nets_;
  int target_;
  mapping::FusedMap fused_;
  mapping::DetectorModel model_;
  Rng rng_;

  std::optional<planner::MdpModel> mdp_;
  planner::ValueTable table_;
  std::optional<planner::Goal> goal_;
  std::optional<Cell> fe_target_;
};

}  // namespace detail

/// Random start: a Free cell from which no target instance is already visible
/// (any Free cell if that set is empty).
inline Cell choose_start(const world::Environment& env, int target_class, double max_range, Rng& rng) {
  const auto seen = target_visibility_cells(env, target_class, max_range);
  std::vector<Cell> candidates;
  for (std::size_t i = 0; i < env.map.size(); ++i) {
    const Cell c = env.map.cell_of(i);
    if (env.map.at(c) != CellState::Free) continue;
    if (std::find(seen.begin(), seen.end(), c) != seen.end()) continue;
    candidates.push_back(c);
  }
  if (candidates.empty())
    for (std::size_t i = 0; i < env.map.size(); ++i)
      if (env.map.cells()[i] == CellState::Free) candidates.push_back(env.map.cell_of(i));
  if (candidates.empty()) throw ValidationError("environment has no Free cell");
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

inline EpisodeLog run_episode(const ScenarioConfig& cfg, const world::Environment& env, bool keep_steps = true) {
  cfg.validate();
  cfg.sensor.validate(env.class_set.size());
  const int target = env.class_index(cfg.target);
  if (target < 0) throw ValidationError("target class not in environment: " + cfg.target);
  const std::vector<semantics::BayesianNetwork> nets = cfg.networks.empty() ? builtin::networks() : cfg.networks;

  EpisodeLog log;
  log.method = cfg.method;
  log.seed = cfg.seed;
  log.target = cfg.target;
  log.class_set = env.class_set;

  Rng world_rng(derive_seed(cfg.seed, 1));
  Cell pose = cfg.start ? *cfg.start : choose_start(env, target, cfg.sensor.max_range, world_rng);
  if (!env.map.is_free(pose)) throw ValidationError("start cell is not Free");
  log.start = pose;
  log.shortest_path_m = shortest_path_to_target(env, pose, target, cfg.sensor.max_range);

  detail::Agent agent(cfg, env, nets, target);
  const double heading = 0.0;
  for (int step = 0;; ++step) {
    const auto sensed = world::simulate_sensing(env, pose, heading, cfg.sensor, world_rng);
    agent.perceive(sensed);
    auto sample = mapping_metrics(agent.fused().objects, env);
    sample.step = step;
    log.metrics.push_back(sample);

    StepRecord rec;
    rec.step = step;
    rec.true_cell = pose;
    rec.belief = sensed.pose;
    rec.detections = sensed.detections;
    rec.n_objects = agent.fused().objects.size();

    const auto& objects = agent.fused().objects;
    if (const auto oi = mapping::object_of_interest(objects, target)) {
      const auto* o = objects.find(*oi);
      if (o->class_dist[static_cast<std::size_t>(target)] >= 1.0 - cfg.epsilon) {
        const auto* gt = env.find_object(o->truth_id);
        log.success = gt && gt->true_class == target;
        log.identified_object = o->id;
        log.stop_reason = log.success ? "target_identified" : "misidentified";
        rec.goal = {planner::Goal::Kind::Done, oi};
        if (keep_steps) log.steps.push_back(std::move(rec));
        break;
      }
    }
    if (step >= cfg.step_budget) {
      log.stop_reason = "budget_exhausted";
      if (keep_steps) log.steps.push_back(std::move(rec));
      break;
    }

    const Cell believed = env.map.clamp_to_cell(sensed.pose.mean);
    const auto action = agent.decide(believed, sensed.pose, rec, log.planning_time_s);
    if (!action) {
      log.stop_reason = "explored_all_regions";
      if (keep_steps) log.steps.push_back(std::move(rec));
      break;
    }
    rec.action = action;
    const Cell next = world::simulate_motion(env, pose, *action, cfg.motion, world_rng);
    log.path_length_m += (env.map.center(next) - env.map.center(pose)).norm();
    pose = next;
    ++log.steps_used;
    if (keep_steps) log.steps.push_back(std::move(rec));
  }
  log.final_map = std::move(agent.fused());
  return log;
}

inline EpisodeLog run_episode(const ScenarioConfig& cfg) {
  return run_episode(cfg, world::environment_from_json(cfg.environment));
}

/// Stationary robot re-observing whatever it sees; one metric sample per step.
inline std::vector<MetricSample> run_stationary_observation(const world::Environment& env, Cell where,
                                                            const world::SensorConfig& sensor, int steps,
                                                            std::uint64_t seed) {
  Rng rng(seed);
  auto fused = mapping::FusedMap::unknown_like(env.map);
  const mapping::DetectorModel model{sensor.detector_alphas};
  std::vector<MetricSample> out;
  for (int t = 0; t < steps; ++t) {
    const auto sensed = world::simulate_sensing(env, where, 0.0, sensor, rng);
    mapping::reveal(fused, sensed.revealed);
    for (const auto& det : sensed.detections)
      mapping::integrate_detection(fused, sensed.pose, det, sensor.range_bearing_cov, model);
    mapping::refresh_rooms(fused);
    auto s = mapping_metrics(fused.objects, env);
    s.step = t;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    throw ParseError("not a number: " + std::string(s));
  }
  return v;
}

struct ResultRow {
  std::string method;
  double success = 0.0;
  double path_length_m = 0.0;
  double spl = 0.0;
  double planning_time_s = 0.0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kResultsHeader = "method,success,path_length_m,spl,planning_time_s";

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.method + ',' + format_double(r.success) + ',' + format_double(r.path_length_m) + ',' +
           format_double(r.spl) + ',' + format_double(r.planning_time_s) + '\n';
  }
  return out;
}

inline std::vector<ResultRow> parse_results_csv(std::string_view text) {
  std::vector<ResultRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kResultsHeader) throw ParseError("unexpected results header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParseError("results row needs 5 fields");
    rows.push_back({f[0], parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
  }
  return rows;
}

inline ResultRow result_row(const EpisodeLog& log) {
  const double s = spl({{log.success, log.shortest_path_m, log.path_length_m}});
  return {std::string(to_string(log.method)), log.success ? 1.0 : 0.0, log.path_length_m, s, log.planning_time_s};
}

inline std::string metrics_csv(const std::vector<MetricSample>& samples) {
  std::string out = "step,median_err,mean_err,cross_entropy,class_entropy,a_opt,d_opt,e_opt,n_objects\n";
  for (const auto& s : samples) {
    out += std::to_string(s.step) + ',' + format_double(s.median_error) + ',' + format_double(s.mean_error) + ',' +
           format_double(s.cross_entropy) + ',' + format_double(s.class_entropy) + ',' + format_double(s.a_opt) +
           ',' + format_double(s.d_opt) + ',' + format_double(s.e_opt) + ',' + std::to_string(s.n_objects) + '\n';
  }
  return out;
}

inline nlohmann::json to_json(const EpisodeLog& log) {
  nlohmann::json j;
  j["method"] = to_string(log.method);
  j["seed"] = log.seed;
  j["target"] = log.target;
  j["start"] = {log.start.x, log.start.y};
  j["outcome"] = {{"success", log.success},
                  {"stop_reason", log.stop_reason},
                  {"steps", log.steps_used},
                  {"path_length_m", log.path_length_m},
                  {"shortest_path_m", std::isfinite(log.shortest_path_m) ? nlohmann::json(log.shortest_path_m)
                                                                         : nlohmann::json(nullptr)},
                  {"planning_time_s", log.planning_time_s},
                  {"identified_object", log.identified_object ? nlohmann::json(*log.identified_object)
                                                              : nlohmann::json(nullptr)}};
  auto steps = nlohmann::json::array();
  for (const auto& r : log.steps) {
    auto dets = nlohmann::json::array();
    for (const auto& d : r.detections)
      dets.push_back({{"truth_id", d.truth_id}, {"range", d.range}, {"bearing", d.bearing},
                      {"confidence", d.confidence}});
    nlohmann::json goal = {{"kind", planner::to_string(r.goal.kind)}};
    if (r.goal.object) goal["object"] = *r.goal.object;
    steps.push_back({{"step", r.step},
                     {"true_cell", {r.true_cell.x, r.true_cell.y}},
                     {"belief_mean", {r.belief.mean.x(), r.belief.mean.y()}},
                     {"belief_cov",
                      {{r.belief.covariance(0, 0), r.belief.covariance(0, 1)},
                       {r.belief.covariance(1, 0), r.belief.covariance(1, 1)}}},
                     {"goal", goal},
                     {"action", r.action ? nlohmann::json(std::string(semsearch::to_string(*r.action)))
                                         : nlohmann::json(nullptr)},
                     {"replanned", r.replanned},
                     {"trials", r.trials},
                     {"start_value", r.start_value},
                     {"n_objects", r.n_objects},
                     {"target_cell", r.target_cell ? nlohmann::json({r.target_cell->x, r.target_cell->y})
                                                   : nlohmann::json(nullptr)},
                     {"detections", dets}});
    if (!r.room_probs.empty()) {
      auto rp = nlohmann::json::array();
      for (const auto& [room, p] : r.room_probs) rp.push_back({room, p});
      steps.back()["room_probs"] = rp;
    }
  }
  j["steps"] = steps;
  j["final_map"] = mapping::to_json(log.final_map, log.class_set);
  return j;
}

// ---------------------------------------------------------------------------
// Benchmark

struct MethodSummary {
  Method method = Method::Ours;
  int episodes = 0;
  double success_rate = 0.0;
  double mean_path_length_m = 0.0;
  double spl = 0.0;
  double mean_planning_time_s = 0.0;
};

/// Runs every scenario `episodes_per_method` times per method. Episode k of a
/// scenario uses seed derive_seed(scenario.seed, k) for every method, so the
/// methods face the same starts and sensor noise streams.
inline std::vector<MethodSummary> run_benchmark(const std::vector<ScenarioConfig>& scenarios,
                                                const std::vector<Method>& methods, int episodes_per_method) {
  if (episodes_per_method < 1) throw ValidationError("need at least one episode per method");
  std::vector<world::Environment> envs;
  envs.reserve(scenarios.size());
  for (const auto& s : scenarios) envs.push_back(world::environment_from_json(s.environment));

  std::vector<MethodSummary> out;
  for (Method m : methods) {
    MethodSummary sum;
    sum.method = m;
    std::vector<SplEntry> entries;
    double path = 0.0;
    double time = 0.0;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
      for (int k = 0; k < episodes_per_method; ++k) {
        ScenarioConfig cfg = scenarios[i];
        cfg.method = m;
        cfg.seed = derive_seed(scenarios[i].seed, static_cast<std::uint64_t>(k));
        const auto log = run_episode(cfg, envs[i], false);
        entries.push_back({log.success, log.shortest_path_m, log.path_length_m});
        path += log.path_length_m;
        time += log.planning_time_s;
        sum.success_rate += log.success ? 1.0 : 0.0;
        ++sum.episodes;
      }
    }
    const double n = static_cast<double>(sum.episodes);
    sum.success_rate /= n;
    sum.mean_path_length_m = path / n;
    sum.mean_planning_time_s = time / n;
    sum.spl = spl(entries);
    out.push_back(sum);
  }
  return out;
}

inline std::vector<ResultRow> to_rows(const std::vector<MethodSummary>& summaries) {
  std::vector<ResultRow> rows;
  for (const auto& s : summaries)
    rows.push_back({std::string(to_string(s.method)), s.success_rate, s.mean_path_length_m, s.spl,
                    s.mean_planning_time_s});
  return rows;
}

}  // namespace semsearch::harness
