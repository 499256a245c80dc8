#pragma once

/*! \file
 *  \brief Agent-side semantic map.
 *
 *  Each mapped object carries a Gaussian position estimate, a class
 *  distribution and a room id. Range-bearing detections are associated by
 *  Mahalanobis gating, positions are fused with an EKF update that
 *  marginalizes robot-pose uncertainty, and class distributions follow a
 *  Dirichlet detector model.
 */

#include "semsearch/core.hpp"
#include "semsearch/grid.hpp"
#include "semsearch/world.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace semsearch::mapping {

/// chi-square, 2 dof, 99%.
inline constexpr double kAssociationGate = 9.21;

struct SemanticObject {
  int id = 0;
  Vec2 mu = Vec2::Zero();
  Mat2 sigma = Mat2::Zero();
  std::vector<double> class_dist;
  int room = kNoRoom;
  /// Ground-truth id of the detection that created the object. Evaluation
  /// bookkeeping only; the agent never reads it.
  int truth_id = -1;
  int observations = 0;
};

class ObjectMap {
 public:
  const std::vector<SemanticObject>& objects() const { return objects_; }
  std::vector<SemanticObject>& objects() { return objects_; }
  bool empty() const { return objects_.empty(); }
  std::size_t size() const { return objects_.size(); }

  auto begin() const { return objects_.begin(); }
  auto end() const { return objects_.end(); }

  SemanticObject& add(SemanticObject o) {
    o.id = next_id_++;
    objects_.push_back(std::move(o));
    return objects_.back();
  }

  SemanticObject* find(int id) {
    for (auto& o : objects_)
      if (o.id == id) return &o;
    return nullptr;
  }
  const SemanticObject* find(int id) const {
    for (const auto& o : objects_)
      if (o.id == id) return &o;
    return nullptr;
  }

 private:
  std::vector<SemanticObject> objects_;
  int next_id_ = 0;
};

struct FusedMap {
  GridMap grid;
  ObjectMap objects;
  RoomLabels rooms;

  static FusedMap unknown_like(const GridMap& reference) {
    return {GridMap(reference.width(), reference.height(), reference.resolution(), CellState::Unknown),
            ObjectMap{}, RoomLabels(reference.width(), reference.height())};
  }
};

struct DetectorModel {
  std::vector<std::vector<double>> alphas;
};

struct GaussianEstimate {
  Vec2 mu = Vec2::Zero();
  Mat2 sigma = Mat2::Zero();
};

struct RangeBearing {
  double range = 0.0;
  double bearing = 0.0;
};

namespace detail {

inline double singular_floor(double largest) { return 1e-12 * std::max(1.0, largest); }

/// Moore-Penrose inverse of a symmetric PSD matrix.
inline Mat2 pseudo_inverse(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  const Vec2 lam = es.eigenvalues();
  const double floor = singular_floor(lam.maxCoeff());
  if (lam.minCoeff() > floor) return m.inverse();
  Vec2 inv = Vec2::Zero();
  for (int i = 0; i < 2; ++i)
    if (lam(i) > floor) inv(i) = 1.0 / lam(i);
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Squared Mahalanobis distance. With a singular covariance, a residual
/// outside its support is infinitely far.
inline double mahalanobis_squared(const Vec2& x, const Vec2& mean, const Mat2& cov) {
  const Vec2 d = x - mean;
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite()) return std::numeric_limits<double>::infinity();
  const Vec2 lam = es.eigenvalues();
  const double floor = detail::singular_floor(lam.maxCoeff());
  if (lam.minCoeff() > floor) {
    Eigen::LDLT<Mat2> ldlt(cov);
    return d.dot(ldlt.solve(d));
  }
  double out = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double proj = es.eigenvectors().col(i).dot(d);
    if (lam(i) > floor)
      out += proj * proj / lam(i);
    else if (std::abs(proj) > 1e-9)
      return std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Nearest object within the gate, or nullopt for a new object.
inline std::optional<int> associate_detection(const ObjectMap& map, const Vec2& implied_position,
                                              const Mat2& implied_cov, double gate = kAssociationGate) {
  std::optional<int> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (const auto& o : map.objects()) {
    const double d2 = mahalanobis_squared(implied_position, o.mu, o.sigma + implied_cov);
    if (d2 <= gate && d2 < best_d2) {
      best_d2 = d2;
      best = o.id;
    }
  }
  return best;
}

/// Position implied by a detection and its first-order covariance.
inline GaussianEstimate implied_position(const world::RobotPoseBelief& pose, const RangeBearing& z,
                                         const Mat2& meas_cov) {
  const double c = std::cos(z.bearing);
  const double s = std::sin(z.bearing);
  Eigen::Matrix2d jz;
  jz << c, -z.range * s, s, z.range * c;
  return {pose.mean + z.range * Vec2(c, s), jz * meas_cov * jz.transpose() + pose.covariance};
}

/// EKF measurement update of an object position from one range-bearing
/// observation. The model h(m, x) = (|m - x|, atan2(m - x)) is linearized at
/// (prior mean, pose mean); pose uncertainty enters through J_x Sigma_p J_x^T
/// added to the innovation covariance.
inline GaussianEstimate fuse_position(const GaussianEstimate& prior, const world::RobotPoseBelief& pose,
                                      const RangeBearing& z, const Mat2& meas_cov) {
  const Vec2 d = prior.mu - pose.mean;
  const double q = d.squaredNorm();
  const double r = std::sqrt(q);
  if (!(r > 1e-9)) throw DegenerateGeometryError("object and robot positions coincide; bearing undefined");

  Eigen::Matrix2d h_m;
  h_m << d.x() / r, d.y() / r, -d.y() / q, d.x() / q;
  // J_x = -H_m, so J_x Sigma_p J_x^T = H_m Sigma_p H_m^T.
  const Mat2 noise = h_m * pose.covariance * h_m.transpose() + meas_cov;
  const Mat2 innovation_cov = h_m * prior.sigma * h_m.transpose() + noise;
  // A singular innovation means the prior and the noise are both exact along
  // some direction; the pseudo-inverse leaves the prior unchanged there.
  const Eigen::Matrix2d gain = prior.sigma * h_m.transpose() * detail::pseudo_inverse(innovation_cov);

  const Vec2 innovation(z.range - r, wrap_angle(z.bearing - std::atan2(d.y(), d.x())));
  GaussianEstimate post;
  post.mu = prior.mu + gain * innovation;
  // Joseph form keeps the covariance symmetric PSD.
  const Mat2 ikh = Mat2::Identity() - gain * h_m;
  post.sigma = ikh * prior.sigma * ikh.transpose() + gain * noise * gain.transpose();
  post.sigma = 0.5 * (post.sigma + post.sigma.transpose());
  return post;
}

inline constexpr double kConfidenceClamp = 1e-6;

/// Clamps to [1e-6, 1 - 1e-6] and renormalizes.
inline std::vector<double> clamp_confidence(std::span<const double> l) {
  std::vector<double> out(l.begin(), l.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::clamp(v, kConfidenceClamp, 1.0 - kConfidenceClamp);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

inline double dirichlet_log_pdf(std::span<const double> x, std::span<const double> alpha) {
  double a0 = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    a0 += alpha[k];
    out += (alpha[k] - 1.0) * std::log(x[k]) - std::lgamma(alpha[k]);
  }
  return out + std::lgamma(a0);
}

struct ClassUpdate {
  std::vector<double> dist;
  bool degenerate = false;
};

/// posterior(c) proportional to Dir(L; alpha_c) * prior(c), in log space.
inline ClassUpdate update_class(std::span<const double> prior, std::span<const double> confidence,
                                const DetectorModel& model) {
  const std::size_t n = prior.size();
  if (confidence.size() != n || model.alphas.size() != n)
    throw ValidationError("class distribution, confidence and detector model sizes differ");
  const auto l = clamp_confidence(confidence);
  std::vector<double> log_post(n);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n; ++c) {
    log_post[c] = prior[c] > 0.0 ? std::log(prior[c]) + dirichlet_log_pdf(l, model.alphas[c])
                                 : -std::numeric_limits<double>::infinity();
    peak = std::max(peak, log_post[c]);
  }
  if (!std::isfinite(peak)) return {std::vector<double>(prior.begin(), prior.end()), true};
  double sum = 0.0;
  for (double& v : log_post) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : log_post) v /= sum;
  return {std::move(log_post), false};
}

inline constexpr int kRoomSearchRadius = 3;

/// Room of the containing cell, else of the nearest labeled Free cell within
/// three cells (Euclidean, ties to the lowest row then column), else NoRoom.
inline int assign_room(const Vec2& position, const GridMap& grid, const RoomLabels& rooms) {
  const auto cell = grid.cell_at(position);
  if (!cell) throw ValidationError("position outside the map");
  if (rooms.at(*cell) != kNoRoom) return rooms.at(*cell);
  int best = kNoRoom;
  int best_d2 = kRoomSearchRadius * kRoomSearchRadius + 1;
  for (int dy = -kRoomSearchRadius; dy <= kRoomSearchRadius; ++dy) {
    for (int dx = -kRoomSearchRadius; dx <= kRoomSearchRadius; ++dx) {
      const Cell c{cell->x + dx, cell->y + dy};
      const int d2 = dx * dx + dy * dy;
      if (d2 >= best_d2 || !grid.in_bounds(c)) continue;
      if (grid.at(c) != CellState::Free || rooms.at(c) == kNoRoom) continue;
      best_d2 = d2;
      best = rooms.at(c);
    }
  }
  return best;
}

/// argmax_i p_i(target); ties to the lowest id.
inline std::optional<int> object_of_interest(const ObjectMap& map, int target_class) {
  std::optional<int> best;
  double best_p = -1.0;
  for (const auto& o : map.objects()) {
    const double p = o.class_dist.at(static_cast<std::size_t>(target_class));
    if (p > best_p || (p == best_p && best && o.id < *best)) {
      best_p = p;
      best = o.id;
    }
  }
  return best;
}

/// Copies sensed cells (and their room labels) into the agent map.
inline void reveal(FusedMap& fused, std::span<const world::RevealedCell> cells) {
  for (const auto& rc : cells) {
    fused.grid.set(rc.cell, rc.state);
    if (rc.state == CellState::Free) fused.rooms.set(rc.cell, rc.room);
  }
}

inline void refresh_rooms(FusedMap& fused) {
  for (auto& o : fused.objects.objects()) {
    if (fused.grid.cell_at(o.mu)) o.room = assign_room(o.mu, fused.grid, fused.rooms);
    else o.room = kNoRoom;
  }
}

/// Full per-detection update: associate, then create or fuse.
/// Returns the id of the updated object.
inline int integrate_detection(FusedMap& fused, const world::RobotPoseBelief& pose,
                               const world::DetectionEvent& det, const Mat2& meas_cov,
                               const DetectorModel& model, double gate = kAssociationGate) {
  const RangeBearing z{det.range, det.bearing};
  const auto implied = implied_position(pose, z, meas_cov);
  const auto match = associate_detection(fused.objects, implied.mu, implied.sigma, gate);
  SemanticObject* obj = match ? fused.objects.find(*match) : nullptr;
  if (!obj) {
    SemanticObject fresh;
    fresh.mu = implied.mu;
    fresh.sigma = implied.sigma;
    const std::size_t n = det.confidence.size();
    const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
    fresh.class_dist = update_class(uniform, det.confidence, model).dist;
    fresh.truth_id = det.truth_id;
    fresh.observations = 1;
    obj = &fused.objects.add(std::move(fresh));
  } else {
    try {
      const auto post = fuse_position({obj->mu, obj->sigma}, pose, z, meas_cov);
      obj->mu = post.mu;
      obj->sigma = post.sigma;
    } catch (const DegenerateGeometryError&) {
      // Robot standing on the estimate: keep the position, still use the class cue.
    }
    obj->class_dist = update_class(obj->class_dist, det.confidence, model).dist;
    ++obj->observations;
  }
  obj->room = fused.grid.cell_at(obj->mu) ? assign_room(obj->mu, fused.grid, fused.rooms) : kNoRoom;
  return obj->id;
}

// ---------------------------------------------------------------------------
// Snapshots

inline nlohmann::json to_json(const SemanticObject& o) {
  return {{"id", o.id},
          {"mu", {o.mu.x(), o.mu.y()}},
          {"sigma", {{o.sigma(0, 0), o.sigma(0, 1)}, {o.sigma(1, 0), o.sigma(1, 1)}}},
          {"class_dist", o.class_dist},
          {"room", o.room}};
}

/// Same dialect as environment documents; Unknown cells are written as -1.
inline nlohmann::json to_json(const FusedMap& fused, const std::vector<std::string>& class_set) {
  nlohmann::json j;
  j["width"] = fused.grid.width();
  j["height"] = fused.grid.height();
  j["resolution"] = fused.grid.resolution();
  std::vector<int> cells;
  cells.reserve(fused.grid.size());
  for (CellState s : fused.grid.cells()) cells.push_back(static_cast<int>(s));
  j["cells"] = cells;
  j["rooms"] = std::vector<int>(fused.rooms.ids().begin(), fused.rooms.ids().end());
  j["classes"] = class_set;
  auto objs = nlohmann::json::array();
  for (const auto& o : fused.objects) objs.push_back(to_json(o));
  j["objects"] = objs;
  return j;
}

}  // namespace semsearch::mapping
