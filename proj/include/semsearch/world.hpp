#pragma once

/*! \file
 *  \brief Ground-truth environments and the simulated robot: stochastic cell
 *  moves, line-of-sight reveal, range-bearing detections with Dirichlet
 *  confidence vectors, and a noisy localization estimate.
 */

#include "semsearch/core.hpp"
#include "semsearch/grid.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace semsearch::world {

struct GroundTruthObject {
  int id = 0;
  Vec2 position = Vec2::Zero();
  int true_class = 0;
  int room = kNoRoom;
};

struct Environment {
  GridMap map;
  RoomLabels rooms;
  std::vector<GroundTruthObject> objects;
  std::vector<std::string> class_set;
  /// Optional semantic space name per room id (generator output).
  std::vector<std::string> room_types;

  int class_index(std::string_view name) const {
    const auto it = std::find(class_set.begin(), class_set.end(), name);
    if (it == class_set.end()) return -1;
    return static_cast<int>(it - class_set.begin());
  }

  const GroundTruthObject* find_object(int id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }

  int room_count() const {
    const auto ids = rooms.ids();
    if (ids.empty()) return 0;
    return *std::max_element(ids.begin(), ids.end()) + 1;
  }
};

struct RobotPoseBelief {
  Vec2 mean = Vec2::Zero();
  Mat2 covariance = Mat2::Zero();
};

struct SensorConfig {
  double max_range = 3.0;
  /// Rays for the agent-side visibility computation; 0 selects dense mode.
  int ray_count = 720;
  double field_of_view = 2.0 * std::numbers::pi;
  Mat2 range_bearing_cov = Mat2::Zero();
  /// One Dirichlet concentration vector per true class.
  std::vector<std::vector<double>> detector_alphas;
  Mat2 pose_noise_cov = Mat2::Zero();
  double false_positive_rate = 0.0;

  void validate(std::size_t num_classes) const {
    if (!(max_range > 0)) throw ValidationError("sensor max_range must be positive");
    if (ray_count < 0) throw ValidationError("ray_count must be non-negative");
    if (!is_symmetric_psd(range_bearing_cov))
      throw ValidationError("range_bearing_cov must be symmetric PSD");
    if (!is_symmetric_psd(pose_noise_cov))
      throw ValidationError("pose_noise_cov must be symmetric PSD");
    if (detector_alphas.size() != num_classes)
      throw ValidationError("need one detector alpha vector per class");
    for (const auto& a : detector_alphas) {
      if (a.size() != num_classes)
        throw ValidationError("detector alpha vector has wrong length");
      for (double v : a)
        if (!(v > 0)) throw ValidationError("detector alphas must be positive");
    }
  }
};

/// Symmetric detector: concentration `peak` on the true class and 1 elsewhere.
inline std::vector<std::vector<double>> peaked_alphas(std::size_t num_classes, double peak) {
  std::vector<std::vector<double>> out(num_classes, std::vector<double>(num_classes, 1.0));
  for (std::size_t c = 0; c < num_classes; ++c) out[c][c] = peak;
  return out;
}

struct DetectionEvent {
  int truth_id = -1;  // -1 for a false positive
  double range = 0.0;
  double bearing = 0.0;
  std::vector<double> confidence;
};

struct RevealedCell {
  Cell cell;
  CellState state;
  int room;
};

struct SensingResult {
  std::vector<RevealedCell> revealed;
  std::vector<DetectionEvent> detections;
  RobotPoseBelief pose;
};

// ---------------------------------------------------------------------------
// Environment documents

inline nlohmann::json to_json(const Environment& env) {
  nlohmann::json j;
  j["width"] = env.map.width();
  j["height"] = env.map.height();
  j["resolution"] = env.map.resolution();
  std::vector<int> cells;
  cells.reserve(env.map.size());
  for (CellState s : env.map.cells()) cells.push_back(static_cast<int>(s));
  j["cells"] = cells;
  j["rooms"] = std::vector<int>(env.rooms.ids().begin(), env.rooms.ids().end());
  j["classes"] = env.class_set;
  auto objs = nlohmann::json::array();
  for (const auto& o : env.objects) {
    objs.push_back({{"id", o.id},
                    {"x", o.position.x()},
                    {"y", o.position.y()},
                    {"class", env.class_set.at(static_cast<std::size_t>(o.true_class))}});
  }
  j["objects"] = objs;
  if (!env.room_types.empty()) j["room_types"] = env.room_types;
  return j;
}

inline Environment environment_from_json(const nlohmann::json& j) {
  Environment env;
  try {
    const int w = j.at("width").get<int>();
    const int h = j.at("height").get<int>();
    const double res = j.at("resolution").get<double>();
    env.map = GridMap(w, h, res, CellState::Free);
    env.rooms = RoomLabels(w, h);
    const auto cells = j.at("cells").get<std::vector<int>>();
    const auto rooms = j.at("rooms").get<std::vector<int>>();
    const auto n = static_cast<std::size_t>(w) * h;
    if (cells.size() != n) throw ParseError("cells length does not match width*height");
    if (rooms.size() != n) throw ParseError("rooms length does not match width*height");
    for (std::size_t i = 0; i < n; ++i) {
      const Cell c = env.map.cell_of(i);
      if (cells[i] == 0) {
        env.map.set(c, CellState::Free);
      } else if (cells[i] == 1) {
        env.map.set(c, CellState::Occupied);
      } else {
        throw ParseError("environment cells must be 0 or 1");
      }
      if (rooms[i] < kNoRoom) throw ParseError("room ids must be >= -1");
      env.rooms.set(c, rooms[i]);
    }
    env.class_set = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("room_types")) env.room_types = j.at("room_types").get<std::vector<std::string>>();
    for (const auto& jo : j.at("objects")) {
      GroundTruthObject o;
      o.id = jo.at("id").get<int>();
      o.position = Vec2(jo.at("x").get<double>(), jo.at("y").get<double>());
      const auto name = jo.at("class").get<std::string>();
      o.true_class = env.class_index(name);
      if (o.true_class < 0) throw ValidationError("unknown class name: " + name);
      env.objects.push_back(o);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed environment document: ") + e.what());
  }

  if (env.class_set.size() < 2) throw ValidationError("class set needs at least two classes");
  std::set<std::string> names(env.class_set.begin(), env.class_set.end());
  if (names.size() != env.class_set.size()) throw ValidationError("duplicate class names");
  std::set<int> ids;
  for (auto& o : env.objects) {
    if (!ids.insert(o.id).second) throw ValidationError("duplicate object id " + std::to_string(o.id));
    const auto cell = env.map.cell_at(o.position);
    if (!cell || env.map.at(*cell) != CellState::Free)
      throw ValidationError("object " + std::to_string(o.id) + " is not in a Free cell");
    o.room = env.rooms.at(*cell);
  }
  return env;
}

inline Environment load_environment(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("environment is not valid JSON: ") + e.what());
  }
  return environment_from_json(j);
}

inline Environment load_environment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open environment file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_environment(ss.str());
}

// ---------------------------------------------------------------------------
// Motion

/// Applies one stochastic cell move. Out-of-bounds or Occupied targets leave
/// the robot where it is.
inline Cell simulate_motion(const Environment& env, Cell pose, MoveAction action,
                            const MotionWeights& weights, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double draw = u01(rng);
  MoveAction realized = action;
  if (draw >= weights.commanded) {
    realized = draw < weights.commanded + weights.left ? rotate_left(action) : rotate_right(action);
  }
  const Cell next = pose + offset(realized);
  if (!env.map.in_bounds(next) || env.map.at(next) == CellState::Occupied) return pose;
  return next;
}

// ---------------------------------------------------------------------------
// Sensing

/// Exact per-cell visibility on the ground truth map: within range (cell
/// centres) and no Occupied cell strictly between the two centres.
inline bool cell_visible(const GridMap& map, Cell from, Cell to, double max_range) {
  const double dx = (to.x - from.x) * map.resolution();
  const double dy = (to.y - from.y) * map.resolution();
  if (dx * dx + dy * dy > max_range * max_range) return false;
  return line_of_sight(from, to, [&](Cell c) { return map.at(c) == CellState::Occupied; });
}

inline bool within_fov(double bearing, double heading, double fov) {
  if (fov >= 2.0 * std::numbers::pi) return true;
  return std::abs(wrap_angle(bearing - heading)) <= 0.5 * fov;
}

inline std::vector<double> sample_dirichlet(const std::vector<double>& alpha, Rng& rng) {
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    std::gamma_distribution<double> g(alpha[k], 1.0);
    out[k] = g(rng);
    sum += out[k];
  }
  if (!(sum > 0)) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (double& v : out) v /= sum;
  return out;
}

/// One sensor sweep from the centre of `true_pose`. Revealed cells are those
/// in line of sight within range and field of view, plus the Occupied cells
/// bordering them; output is in row-major order.
inline SensingResult simulate_sensing(const Environment& env, Cell true_pose, double heading,
                                      const SensorConfig& config, Rng& rng) {
  const GridMap& map = env.map;
  SensingResult out;
  const Vec2 origin = map.center(true_pose);
  const int reach = static_cast<int>(std::ceil(config.max_range / map.resolution()));

  std::vector<std::uint8_t> visible(map.size(), 0);
  for (int y = std::max(0, true_pose.y - reach); y <= std::min(map.height() - 1, true_pose.y + reach); ++y) {
    for (int x = std::max(0, true_pose.x - reach); x <= std::min(map.width() - 1, true_pose.x + reach); ++x) {
      const Cell c{x, y};
      if (c != true_pose) {
        const Vec2 d = map.center(c) - origin;
        if (!within_fov(std::atan2(d.y(), d.x()), heading, config.field_of_view)) continue;
      }
      if (!cell_visible(map, true_pose, c, config.max_range)) continue;
      visible[map.index(c)] = 1;
    }
  }
  // Walls bounding a visible Free cell are seen as surfaces even when their
  // centres are hidden at grazing angles.
  std::vector<std::uint8_t> seen = visible;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!visible[i] || map.cells()[i] != CellState::Free) continue;
    const Cell c = map.cell_of(i);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const Cell n{c.x + dx, c.y + dy};
        if (map.in_bounds(n) && map.at(n) == CellState::Occupied) seen[map.index(n)] = 1;
      }
  }
  for (std::size_t i = 0; i < map.size(); ++i)
    if (seen[i]) out.revealed.push_back({map.cell_of(i), map.cells()[i], env.rooms.at(map.cell_of(i))});

  for (const auto& obj : env.objects) {
    const auto cell = map.cell_at(obj.position);
    if (!cell || !visible[map.index(*cell)]) continue;
    const Vec2 d = obj.position - origin;
    const double range = d.norm();
    if (range > config.max_range || range <= 0.0) continue;
    const Vec2 z = sample_gaussian(Vec2(range, std::atan2(d.y(), d.x())), config.range_bearing_cov, rng);
    DetectionEvent ev;
    ev.truth_id = obj.id;
    ev.range = std::max(z.x(), 1e-6);
    ev.bearing = wrap_angle(z.y());
    ev.confidence = sample_dirichlet(config.detector_alphas.at(static_cast<std::size_t>(obj.true_class)), rng);
    out.detections.push_back(std::move(ev));
  }

  if (config.false_positive_rate > 0.0) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    if (u01(rng) < config.false_positive_rate) {
      std::vector<Cell> candidates;
      for (const auto& r : out.revealed)
        if (r.state == CellState::Free && r.cell != true_pose) candidates.push_back(r.cell);
      if (!candidates.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        const Vec2 d = map.center(candidates[pick(rng)]) - origin;
        DetectionEvent ev;
        ev.range = d.norm();
        ev.bearing = std::atan2(d.y(), d.x());
        ev.confidence = sample_dirichlet(std::vector<double>(env.class_set.size(), 1.0), rng);
        out.detections.push_back(std::move(ev));
      }
    }
  }

  out.pose.mean = sample_gaussian(origin, config.pose_noise_cov, rng);
  out.pose.covariance = config.pose_noise_cov;
  return out;
}

}  // namespace semsearch::world
