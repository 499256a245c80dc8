#include "oracles/bayes_filter_oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace semsearch;
using namespace semsearch::mapping;

namespace {

SemanticObject object_at(Vec2 mu, Mat2 sigma, std::vector<double> dist = {0.5, 0.5}) {
  SemanticObject o;
  o.mu = mu;
  o.sigma = sigma;
  o.class_dist = std::move(dist);
  return o;
}

double dirichlet_pdf(const std::vector<double>& x, const std::vector<double>& a) {
  double norm = 0.0, sum = 0.0, p = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sum += a[k];
    norm += std::lgamma(a[k]);
    p *= std::pow(x[k], a[k] - 1.0);
  }
  return p * std::exp(std::lgamma(sum) - norm);
}

}  // namespace

TEST(Associate, EmptyMapGivesNewObject) {
  EXPECT_FALSE(associate_detection(ObjectMap{}, Vec2(0, 0), Mat2::Identity()));
}

TEST(Associate, GateDecidesBetweenMatchAndNewObject) {
  ObjectMap map;
  const int id = map.add(object_at({0, 0}, Mat2::Identity())).id;
  EXPECT_NEAR(mahalanobis_squared({0.1, 0}, {0, 0}, 2.0 * Mat2::Identity()), 0.005, 1e-12);
  EXPECT_EQ(associate_detection(map, {0.1, 0}, Mat2::Identity(), 9.21), id);
  EXPECT_NEAR(mahalanobis_squared({10, 0}, {0, 0}, 2.0 * Mat2::Identity()), 50.0, 1e-12);
  EXPECT_FALSE(associate_detection(map, {10, 0}, Mat2::Identity(), 9.21));
}

TEST(Associate, PicksTheNearestGatedObject) {
  ObjectMap map;
  map.add(object_at({0, 0}, Mat2::Identity()));
  const int near = map.add(object_at({1, 0}, Mat2::Identity())).id;
  EXPECT_EQ(associate_detection(map, {0.9, 0}, Mat2::Identity()), near);
}

TEST(Associate, SingularCovarianceGatesOnItsSupport) {
  const Mat2 line = (Mat2() << 1.0, 0.0, 0.0, 0.0).finished();
  EXPECT_NEAR(mahalanobis_squared({2, 0}, {0, 0}, line), 4.0, 1e-12);
  EXPECT_TRUE(std::isinf(mahalanobis_squared({0, 0.1}, {0, 0}, line)));
  EXPECT_EQ(mahalanobis_squared({1, 1}, {1, 1}, Mat2::Zero()), 0.0);
  ObjectMap map;
  const int id = map.add(object_at({1, 1}, Mat2::Zero())).id;
  EXPECT_EQ(associate_detection(map, {1, 1}, Mat2::Zero()), id);
  EXPECT_FALSE(associate_detection(map, {1.001, 1}, Mat2::Zero()));
}

TEST(FusePosition, ExactPriorAndNoiselessSensingStayExact) {
  const GaussianEstimate prior{{3.0, 4.0}, Mat2::Zero()};
  const world::RobotPoseBelief pose{{0.0, 0.0}, Mat2::Zero()};
  const auto post = fuse_position(prior, pose, {5.0, std::atan2(4.0, 3.0)}, Mat2::Zero());
  EXPECT_TRUE(post.mu.allFinite());
  EXPECT_EQ(post.mu, prior.mu);
  EXPECT_EQ(post.sigma, Mat2::Zero());
}

TEST(FusePosition, ExactMeasurementLimit) {
  const GaussianEstimate prior{{3.0, 4.0}, Mat2::Identity() * 0.04};
  const world::RobotPoseBelief pose{{0.0, 0.0}, Mat2::Zero()};
  const RangeBearing z{5.0, std::atan2(4.0, 3.0)};
  const auto post = fuse_position(prior, pose, z, Mat2::Identity() * 1e-14);
  EXPECT_NEAR((post.mu - prior.mu).norm(), 0.0, 1e-9);
  EXPECT_LT(post.sigma.norm(), 1e-9);
}

TEST(FusePosition, OneDimensionalReductionIsTheGaussianProduct) {
  // Robot on the x axis, object prior pinned in y: only the range row acts.
  Mat2 prior_sigma = Mat2::Zero();
  prior_sigma(0, 0) = 1.0;
  const GaussianEstimate prior{{0.0, 0.0}, prior_sigma};
  const world::RobotPoseBelief pose{{-10.0, 0.0}, Mat2::Zero()};
  Mat2 meas = Mat2::Zero();
  meas(0, 0) = 1.0;
  meas(1, 1) = 1e-4;
  const auto post = fuse_position(prior, pose, {12.0, 0.0}, meas);
  EXPECT_NEAR(post.mu.x(), 1.0, 1e-12);
  EXPECT_NEAR(post.mu.y(), 0.0, 1e-12);
  EXPECT_NEAR(post.sigma(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(post.sigma(1, 1), 0.0, 1e-12);
}

TEST(FusePosition, MatchesMonteCarloBayesUpdate) {
  const Mat2 pose_cov = Mat2::Identity() * 0.01;
  Mat2 meas = Mat2::Zero();
  meas(0, 0) = 0.05 * 0.05;
  meas(1, 1) = 0.02 * 0.02;
  Mat2 prior_sigma;
  prior_sigma << 0.0025, 0.0008, 0.0008, 0.0016;
  const Vec2 pose_mu(1.0, 2.0);
  const Vec2 prior_mu = pose_mu + Vec2(2.5 * std::cos(0.7), 2.5 * std::sin(0.7));
  const RangeBearing z{2.5, 0.7};
  const auto post = fuse_position({prior_mu, prior_sigma}, {pose_mu, pose_cov}, z, meas);
  const auto mc = oracle::bayes_update(prior_mu, prior_sigma, pose_mu, pose_cov, z.range, z.bearing, meas, 1000000, 5);
  EXPECT_LT((post.mu - mc.mean).norm() / (mc.mean - pose_mu).norm(), 0.02);
  EXPECT_LT((post.sigma - mc.cov).norm() / mc.cov.norm(), 0.02);
}

TEST(FusePosition, CoincidentPositionsAreDegenerate) {
  const GaussianEstimate prior{{1.0, 1.0}, Mat2::Identity()};
  EXPECT_THROW(fuse_position(prior, {{1.0, 1.0}, Mat2::Zero()}, {0.1, 0.0}, Mat2::Identity()),
               DegenerateGeometryError);
}

TEST(FusePosition, ExactPoseUpdatesShrinkInLoewnerOrderAndTrace) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Mat2 a;
    a << u(rng), u(rng), u(rng), u(rng);
    GaussianEstimate est{{5.0 + u(rng), 5.0 + u(rng)}, a * a.transpose() * 0.1 + Mat2::Identity() * 1e-4};
    const world::RobotPoseBelief pose{{u(rng) * 3.0, u(rng) * 3.0}, Mat2::Zero()};
    Mat2 meas = Mat2::Zero();
    meas(0, 0) = 0.001 + 0.05 * u(rng);
    meas(1, 1) = 0.0001 + 0.01 * u(rng);
    for (int k = 0; k < 5; ++k) {
      const Vec2 d = est.mu - pose.mean;
      const RangeBearing z{d.norm() + 0.1 * (u(rng) - 0.5), std::atan2(d.y(), d.x()) + 0.05 * (u(rng) - 0.5)};
      const auto post = fuse_position(est, pose, z, meas);
      EXPECT_LE(post.sigma.trace(), est.sigma.trace() + 1e-12);
      const Eigen::SelfAdjointEigenSolver<Mat2> es(est.sigma - post.sigma);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
      EXPECT_TRUE(is_symmetric_psd(post.sigma));
      est = post;
    }
  }
}

TEST(UpdateClass, IdenticalLikelihoodsLeaveThePrior) {
  const DetectorModel model{{{2.0, 3.0, 4.0}, {2.0, 3.0, 4.0}, {2.0, 3.0, 4.0}}};
  const std::vector<double> prior = {0.2, 0.5, 0.3};
  const auto out = update_class(prior, std::vector<double>{0.1, 0.3, 0.6}, model);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out.dist[k], prior[k], 1e-12);
}

TEST(UpdateClass, LikelihoodRatioFourGivesPointEight) {
  // Dir(L; (2,1)) = 2 L1 and Dir(L; (1,2)) = 2 L2, so L = (0.8, 0.2) gives ratio 4.
  const DetectorModel model{{{2.0, 1.0}, {1.0, 2.0}}};
  const auto out = update_class(std::vector<double>{0.5, 0.5}, std::vector<double>{0.8, 0.2}, model);
  EXPECT_NEAR(out.dist[0], 0.8, 1e-12);
  EXPECT_NEAR(out.dist[1], 0.2, 1e-12);
  EXPECT_FALSE(out.degenerate);
}

TEST(UpdateClass, RepeatedDrawsMatchALiteralProductLoop) {
  const DetectorModel model{{{8.0, 2.0, 2.0}, {2.0, 8.0, 2.0}, {2.0, 2.0, 8.0}}};
  Rng rng(31);
  std::vector<double> post = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::vector<double> lit = post;
  int k_impl = -1, k_oracle = -1;
  for (int step = 1; step <= 200 && (k_impl < 0 || k_oracle < 0); ++step) {
    const auto l = world::sample_dirichlet(model.alphas[0], rng);
    post = update_class(post, l, model).dist;
    const auto lc = clamp_confidence(l);
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      lit[c] *= dirichlet_pdf(lc, model.alphas[c]);
      sum += lit[c];
    }
    for (double& v : lit) v /= sum;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(post[c], lit[c], 1e-9);
    if (k_impl < 0 && post[0] > 0.99) k_impl = step;
    if (k_oracle < 0 && lit[0] > 0.99) k_oracle = step;
  }
  EXPECT_GT(k_impl, 0);
  EXPECT_EQ(k_impl, k_oracle);
}

TEST(UpdateClass, CommutesOverObservationOrder) {
  const DetectorModel model{{{5.0, 1.0, 2.0}, {1.0, 4.0, 1.0}, {2.0, 2.0, 3.0}}};
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(world::sample_dirichlet(model.alphas[trial % 3], rng));
    std::vector<double> a = {0.3, 0.3, 0.4};
    for (const auto& l : batch) a = update_class(a, l, model).dist;
    std::shuffle(batch.begin(), batch.end(), rng);
    std::vector<double> b = {0.3, 0.3, 0.4};
    for (const auto& l : batch) b = update_class(b, l, model).dist;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 1e-9);
  }
}

TEST(UpdateClass, ExactZerosAreClampedAndZeroPriorIsFlagged) {
  const DetectorModel model{{{3.0, 1.0}, {1.0, 3.0}}};
  const auto out = update_class(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}, model);
  EXPECT_GT(out.dist[0], 0.999);
  EXPECT_NEAR(out.dist[0] + out.dist[1], 1.0, 1e-12);
  const auto degenerate = update_class(std::vector<double>{0.0, 0.0}, std::vector<double>{0.5, 0.5}, model);
  EXPECT_TRUE(degenerate.degenerate);
  EXPECT_EQ(degenerate.dist, (std::vector<double>{0.0, 0.0}));
}

TEST(AssignRoom, LabeledCellNeighbourAndSentinel) {
  GridMap g(12, 12, 1.0, CellState::Free);
  RoomLabels rooms(12, 12);
  rooms.set({2, 2}, 3);
  EXPECT_EQ(assign_room({2.5, 2.5}, g, rooms), 3);
  rooms.set({6, 6}, 2);
  EXPECT_EQ(assign_room({7.5, 6.5}, g, rooms), 2);
  EXPECT_EQ(assign_room({11.5, 11.5}, g, rooms), kNoRoom);
  EXPECT_THROW(assign_room({12.5, 1.0}, g, rooms), ValidationError);
}

TEST(AssignRoom, NearestLabelMatchesBruteForce) {
  std::mt19937_64 rng(51);
  GridMap g(15, 15, 1.0, CellState::Free);
  RoomLabels rooms(15, 15);
  for (int k = 0; k < 12; ++k) rooms.set({static_cast<int>(rng() % 15), static_cast<int>(rng() % 15)}, k);
  for (int y = 0; y < 15; ++y)
    for (int x = 0; x < 15; ++x) {
      int expected = rooms.at({x, y});
      if (expected == kNoRoom) {
        int best = 10;
        for (int yy = 0; yy < 15; ++yy)
          for (int xx = 0; xx < 15; ++xx) {
            const int d2 = (xx - x) * (xx - x) + (yy - y) * (yy - y);
            if (rooms.at({xx, yy}) != kNoRoom && d2 <= 9 && d2 < best) {
              best = d2;
              expected = rooms.at({xx, yy});
            }
          }
      }
      EXPECT_EQ(assign_room({x + 0.5, y + 0.5}, g, rooms), expected) << x << "," << y;
    }
}

TEST(ObjectOfInterest, ArgmaxTieAndEmpty) {
  ObjectMap map;
  EXPECT_FALSE(object_of_interest(map, 0));
  map.add(object_at({0, 0}, Mat2::Identity(), {0.2, 0.8}));
  const int second = map.add(object_at({1, 0}, Mat2::Identity(), {0.7, 0.3})).id;
  EXPECT_EQ(object_of_interest(map, 0), second);

  ObjectMap tie;
  const int first = tie.add(object_at({0, 0}, Mat2::Identity(), {0.5, 0.5})).id;
  tie.add(object_at({1, 0}, Mat2::Identity(), {0.5, 0.5}));
  EXPECT_EQ(object_of_interest(tie, 0), first);
}

TEST(IntegrateDetection, CreatesThenFusesTheSameObject) {
  auto fused = FusedMap::unknown_like(GridMap(20, 20, 0.25));
  fused.grid = GridMap(20, 20, 0.25, CellState::Free);
  fused.rooms = RoomLabels(20, 20, 4);
  const DetectorModel model{{{4.0, 1.0}, {1.0, 4.0}}};
  const world::RobotPoseBelief pose{{1.0, 1.0}, Mat2::Identity() * 1e-4};
  Mat2 meas = Mat2::Zero();
  meas(0, 0) = 0.0025;
  meas(1, 1) = 0.0004;
  world::DetectionEvent det;
  det.truth_id = 9;
  det.range = 2.0;
  det.bearing = 0.5;
  det.confidence = {0.9, 0.1};
  const int id = integrate_detection(fused, pose, det, meas, model);
  ASSERT_EQ(fused.objects.size(), 1u);
  const auto first = *fused.objects.find(id);
  EXPECT_EQ(first.room, 4);
  EXPECT_EQ(first.truth_id, 9);
  EXPECT_GT(first.class_dist[0], 0.5);
  EXPECT_EQ(integrate_detection(fused, pose, det, meas, model), id);
  ASSERT_EQ(fused.objects.size(), 1u);
  EXPECT_LT(fused.objects.find(id)->sigma.trace(), first.sigma.trace());
  EXPECT_GT(fused.objects.find(id)->class_dist[0], first.class_dist[0]);
  EXPECT_EQ(fused.objects.find(id)->observations, 2);
}
