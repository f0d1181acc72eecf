#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "mvrefine/consistency.hpp"
#include "mvrefine/error.hpp"
#include "support.hpp"

namespace mvrefine {
namespace {

using testing::rotz;

// Observation of view pose T_s as seen from a query at T_q, in the
// rendered-to-query direction, plus the true baseline.
ViewObservation observe_view(const Pose& t_q, const Pose& t_s, double* baseline = nullptr) {
  const Pose t_qs = t_q * t_s.inverse();
  ViewObservation obs;
  obs.absolute_pose = t_s;
  obs.relative.rotation = t_qs.rotation;
  obs.relative.direction = t_qs.translation.normalized();
  obs.relative.direction_of_transform = TransformDirection::rendered_to_query;
  if (baseline) *baseline = t_qs.translation.norm();
  return obs;
}

std::vector<ViewObservation> noiseless(const Pose& t_gt, std::size_t views, std::mt19937_64& rng,
                                       std::vector<double>* baselines = nullptr) {
  std::vector<ViewObservation> obs;
  for (std::size_t i = 0; i < views; ++i) {
    const Pose t_s = testing::random_pose(rng, 0.3, 0.3) * t_gt;
    double b = 0.0;
    obs.push_back(observe_view(t_gt, t_s, &b));
    if (baselines) baselines->push_back(b);
  }
  return obs;
}

TEST(ComposeRotationCandidates, Examples) {
  ViewObservation trivial;
  trivial.relative.direction_of_transform = TransformDirection::rendered_to_query;
  const auto single = compose_rotation_candidates(std::vector{trivial});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0], Rotation::Identity());

  const Rotation r_gt = so3_exp(Vec3(0.2, -0.1, 0.4));
  const Rotation r_s = so3_exp(Vec3(-0.3, 0.5, 0.1));
  ViewObservation obs;
  obs.absolute_pose.rotation = r_s;
  obs.relative.rotation = r_gt * r_s.transpose();
  obs.relative.direction_of_transform = TransformDirection::rendered_to_query;
  EXPECT_LT((compose_rotation_candidates(std::vector{obs})[0] - r_gt).norm(), 1e-15);

  EXPECT_THROW(compose_rotation_candidates({}), PreconditionError);
}

TEST(ComposeRotationCandidates, EitherDirection) {
  std::mt19937_64 rng(1);
  const Pose t_gt = testing::random_pose(rng, 1.0, 1.0);
  auto obs = noiseless(t_gt, 4, rng);
  obs[1].relative = obs[1].relative.inverted();
  obs[3].relative = obs[3].relative.inverted();
  for (const Rotation& r : compose_rotation_candidates(obs)) EXPECT_LT(rotation_angle(r, t_gt.rotation), 1e-9);
}

TEST(AverageRotations, Examples) {
  const Rotation r = so3_exp(Vec3(0.3, 0.2, -0.1));
  const std::vector<Rotation> same(3, r);
  EXPECT_LT(rotation_angle(average_rotations(same).rotation, r), 1e-12);

  const std::vector<Rotation> pair{rotz(0.2), rotz(-0.2)};
  EXPECT_LT(rotation_angle(average_rotations(pair).rotation, Rotation::Identity()), 1e-12);
}

TEST(AverageRotations, NoWorseThanAnyCandidate) {
  std::mt19937_64 rng(2);
  const Rotation r_gt = so3_exp(Vec3(0.5, -0.4, 1.0));
  std::vector<Rotation> c;
  for (int i = 0; i < 5; ++i) c.push_back(r_gt * so3_exp(testing::gaussian_vec(rng, 0.05)));
  const Rotation mean = average_rotations(c).rotation;
  const double cost = rotation_cost(mean, c);
  for (const Rotation& r : c) EXPECT_LE(cost, rotation_cost(r, c));
}

TEST(AverageRotations, StationaryPoint) {
  std::mt19937_64 rng(3);
  std::vector<Rotation> c;
  std::vector<double> w;
  for (int i = 0; i < 7; ++i) {
    c.push_back(so3_exp(testing::gaussian_vec(rng, 0.3)));
    w.push_back(0.5 + i);
  }
  const Rotation mean = average_rotations(c, w).rotation;
  Vec3 grad = Vec3::Zero();
  for (std::size_t i = 0; i < c.size(); ++i) grad += w[i] * so3_log(mean.transpose() * c[i]);
  EXPECT_LT(grad.norm(), 1e-10);
}

TEST(AverageRotations, LeftInvariance) {
  std::mt19937_64 rng(4);
  std::vector<Rotation> c, moved;
  for (int i = 0; i < 6; ++i) c.push_back(so3_exp(testing::gaussian_vec(rng, 0.4)));
  const Rotation q = so3_exp(Vec3(1.0, -2.0, 0.5));
  for (const Rotation& r : c) moved.push_back(q * r);
  EXPECT_LT(rotation_angle(average_rotations(moved).rotation, q * average_rotations(c).rotation), 1e-9);
}

TEST(AverageRotations, DispersionWarning) {
  EXPECT_FALSE(average_rotations(std::vector{rotz(0.2), rotz(-0.2)}).dispersion_warning);
  EXPECT_TRUE(average_rotations(std::vector{rotz(1.0), rotz(-1.0)}).dispersion_warning);
  EXPECT_THROW(average_rotations({}), PreconditionError);
}

TEST(SolveScalesTranslation, TwoViewBaselines) {
  const Pose t_gt{so3_exp(Vec3(0.1, 0.2, -0.1)), Vec3(0.3, -0.2, 1.0)};
  const Pose qs1{rotz(0.1), Vec3(1.0, 0.0, 0.0)};
  const Pose qs2{so3_exp(Vec3(0.0, 0.2, 0.0)), Vec3(0.0, 1.4, 0.0)};
  const std::vector<ViewObservation> obs{observe_view(t_gt, qs1.inverse() * t_gt),
                                         observe_view(t_gt, qs2.inverse() * t_gt)};
  const auto sol = solve_scales_translation(obs);
  EXPECT_LT((sol.translation - t_gt.translation).norm(), 1e-9);
  ASSERT_EQ(sol.scales.size(), 2u);
  EXPECT_NEAR(sol.scales[0], 1.0, 1e-9);
  EXPECT_NEAR(sol.scales[1], 1.4, 1e-9);
  EXPECT_LT(sol.residual, 1e-9);
}

TEST(SolveScalesTranslation, ParallelDirectionsAreDegenerate) {
  // With every t_qs along one axis, shifting t along that axis and every scale by
  // the same amount leaves all equations satisfied, so the system has a null
  // direction whether or not the view centers differ.
  for (bool distinct : {true, false}) {
    std::vector<ViewObservation> obs;
    for (int i = 0; i < 3; ++i) {
      ViewObservation o;
      o.absolute_pose = Pose::from_translation(distinct ? Vec3(0.1 * i, -0.2 * i, 0.3 * i) : Vec3(0.1, 0.2, 0.3));
      o.relative.rotation = Rotation::Identity();
      o.relative.direction = Vec3::UnitX();
      o.relative.direction_of_transform = TransformDirection::rendered_to_query;
      obs.push_back(o);
    }
    EXPECT_THROW(solve_scales_translation(obs), ScaleDegeneracyError) << "distinct centers: " << distinct;
  }
}

TEST(SolveScalesTranslation, SingleObservation) {
  std::mt19937_64 rng(5);
  const auto obs = noiseless(Pose::identity(), 1, rng);
  EXPECT_THROW(solve_scales_translation(obs), PreconditionError);
}

TEST(SolveScalesTranslation, MatchesDenseOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t v = 2 + trial % 5;
    // Even trials are consistent by construction, odd ones are random.
    const bool consistent = trial % 2 == 0;
    std::vector<ViewObservation> obs;
    if (consistent) obs = noiseless(testing::random_pose(rng, 1.0, 1.0), v, rng);
    for (std::size_t i = 0; i < v; ++i) {
      if (!consistent) {
        ViewObservation o;
        o.absolute_pose = testing::random_pose(rng, 1.0, 1.0);
        o.relative.rotation = so3_exp(testing::random_phi(rng, 1.0));
        o.relative.direction = testing::random_unit(rng);
        o.relative.direction_of_transform = TransformDirection::rendered_to_query;
        obs.push_back(o);
      }
      obs[i].weight = 0.5 + std::uniform_real_distribution<>(0, 1)(rng);
    }
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(v);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3 * static_cast<Eigen::Index>(v), n);
    Eigen::VectorXd b(3 * static_cast<Eigen::Index>(v));
    for (std::size_t i = 0; i < v; ++i) {
      const Eigen::Index r = 3 * static_cast<Eigen::Index>(i);
      const double sw = std::sqrt(obs[i].weight);
      a.block<3, 3>(r, 0) = sw * Eigen::Matrix3d::Identity();
      a.block<3, 1>(r, 3 + static_cast<Eigen::Index>(i)) = -sw * obs[i].relative.direction;
      b.segment<3>(r) = sw * obs[i].relative.rotation * obs[i].absolute_pose.translation;
    }
    const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
    const auto sol = solve_scales_translation(obs);
    EXPECT_LT((sol.translation - x.head<3>()).norm(), 1e-9);
    for (std::size_t i = 0; i < v; ++i) EXPECT_NEAR(sol.scales[i], x(3 + static_cast<Eigen::Index>(i)), 1e-9);
    EXPECT_EQ((a * x - b).norm() < 1e-9, consistent);
    EXPECT_EQ(sol.residual < 1e-9, consistent);
  }
}

TEST(SolveScalesTranslation, DuplicationEqualsWeight) {
  std::mt19937_64 rng(7);
  std::vector<ViewObservation> base;
  for (int i = 0; i < 3; ++i) {
    ViewObservation o;
    o.absolute_pose = testing::random_pose(rng, 1.0, 1.0);
    o.relative.rotation = so3_exp(testing::random_phi(rng, 1.0));
    o.relative.direction = testing::random_unit(rng);
    o.relative.direction_of_transform = TransformDirection::rendered_to_query;
    base.push_back(o);
  }
  auto weighted = base;
  weighted[1].weight = 3.0;
  auto duplicated = base;
  duplicated.push_back(base[1]);
  duplicated.push_back(base[1]);
  const auto a = solve_scales_translation(weighted);
  const auto b = solve_scales_translation(duplicated);
  EXPECT_LT((a.translation - b.translation).norm(), 1e-9);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(a.scales[i], b.scales[i], 1e-9);
  EXPECT_NEAR(b.scales[3], b.scales[1], 1e-9);

  const auto ra = average_rotations(compose_rotation_candidates(weighted), std::vector<double>{1.0, 3.0, 1.0});
  const auto rb = average_rotations(compose_rotation_candidates(duplicated));
  EXPECT_LT(rotation_angle(ra.rotation, rb.rotation), 1e-9);
}

TEST(CoarsePose, NoiselessRecoversGroundTruth) {
  std::mt19937_64 rng(8);
  for (std::size_t views = 2; views <= 7; ++views) {
    const Pose t_gt = testing::random_pose(rng, 1.0, 1.0);
    std::vector<double> baselines;
    const auto obs = noiseless(t_gt, views, rng, &baselines);
    const auto sol = coarse_pose(obs);
    EXPECT_LT(rotation_angle(sol.pose.rotation, t_gt.rotation), 1e-9);
    EXPECT_LT((sol.pose.translation - t_gt.translation).norm(), 1e-9);
    EXPECT_LT(sol.rotation_residual, 1e-9);
    EXPECT_LT(sol.translation_residual, 1e-9);
    ASSERT_EQ(sol.scales.size(), views);
    for (std::size_t i = 0; i < views; ++i) EXPECT_NEAR(sol.scales[i], baselines[i], 1e-9);
  }
}

TEST(CoarsePose, ReferencePlusOneCandidate) {
  std::mt19937_64 rng(9);
  const Pose t_ref = testing::random_pose(rng, 0.5, 1.0);
  const Pose t_qr{so3_exp(Vec3(0.02, -0.01, 0.03)), Vec3(0.05, 0.02, -0.04)};
  const Pose t_q = t_qr * t_ref;
  const Pose t_c = testing::random_pose(rng, 0.05, 0.05) * t_ref;
  const auto sol = coarse_pose(std::vector{observe_view(t_q, t_ref), observe_view(t_q, t_c)});
  EXPECT_LT(rotation_angle(sol.pose.rotation, t_q.rotation), 1e-9);
  EXPECT_LT((sol.pose.translation - t_q.translation).norm(), 1e-9);
}

TEST(CoarsePose, PerturbedRotationLandsBetweenCandidates) {
  std::mt19937_64 rng(10);
  const Pose t_gt = testing::random_pose(rng, 1.0, 1.0);
  auto obs = noiseless(t_gt, 4, rng);
  obs[2].relative.rotation = so3_exp(0.1 * Vec3(0.0, 0.6, 0.8)) * obs[2].relative.rotation;
  const auto sol = coarse_pose(obs);
  EXPECT_GT(sol.rotation_residual, 0.0);
  const auto candidates = compose_rotation_candidates(obs);
  const double cost = rotation_cost(sol.pose.rotation, candidates);
  for (const Rotation& r : candidates) EXPECT_LE(cost, rotation_cost(r, candidates));
  EXPECT_GT(rotation_angle(sol.pose.rotation, t_gt.rotation), 0.0);
  EXPECT_LT(rotation_angle(sol.pose.rotation, t_gt.rotation), 0.1);
}

TEST(CoarsePose, NeedsTwoObservations) {
  std::mt19937_64 rng(11);
  EXPECT_THROW(coarse_pose(noiseless(Pose::identity(), 1, rng)), PreconditionError);
}

}  // namespace
}  // namespace mvrefine
