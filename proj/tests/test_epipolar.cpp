#include <gtest/gtest.h>

#include "mvrefine/epipolar.hpp"
#include "mvrefine/error.hpp"
#include "support.hpp"

namespace mvrefine {
namespace {

using testing::deg;
using testing::exact_matches;
using testing::normalized_xy;

const Intrinsics kK = testing::default_k();

struct NormalizedPairs {
  std::vector<Eigen::Vector2d> query, view;
};

NormalizedPairs normalized_pairs(const CorrespondenceSet& set) {
  NormalizedPairs out;
  for (const auto& r : set.records) {
    out.query.push_back(normalized_xy(kK, r.query_point));
    out.view.push_back(normalized_xy(kK, r.view_point));
  }
  return out;
}

// Unit Frobenius norm with a fixed sign so two essentials compare directly.
Eigen::Matrix3d canonical(const Eigen::Matrix3d& e) {
  Eigen::Matrix3d n = e / e.norm();
  Eigen::Index r, c;
  n.cwiseAbs().maxCoeff(&r, &c);
  return n(r, c) < 0 ? Eigen::Matrix3d(-n) : n;
}

double direction_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.normalized().cross(b.normalized()).norm(), a.normalized().dot(b.normalized()));
}

TEST(EightPoint, RecoversEssentialFromExactPairs) {
  std::mt19937_64 rng(1);
  const Pose t_sq{testing::rotz(deg(10)), Vec3(0.2, 0, 0.02)};
  const auto fx = exact_matches(kK, Pose::identity(), t_sq, 10, rng);
  ASSERT_EQ(fx.matches.size(), 10u);
  const auto p = normalized_pairs(fx.matches);
  const Eigen::Matrix3d e = eight_point(p.query, p.view);
  const Eigen::Matrix3d oracle = hat(t_sq.translation) * t_sq.rotation;
  EXPECT_LT((canonical(e) - canonical(oracle)).norm(), 1e-8);

  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3d>(e).singularValues();
  EXPECT_NEAR(sv(0), sv(1), 1e-12);
  EXPECT_NEAR(sv(2), 0.0, 1e-12);
  EXPECT_NEAR(e.norm(), 1.0, 1e-12);
}

TEST(EightPoint, PureTranslation) {
  std::mt19937_64 rng(2);
  const Pose t_sq = Pose::from_translation(Vec3(1, 0, 0));
  const auto fx = exact_matches(kK, Pose::identity(), t_sq, 12, rng);
  const auto p = normalized_pairs(fx.matches);
  EXPECT_LT((canonical(eight_point(p.query, p.view)) - canonical(hat(Vec3::UnitX()))).norm(), 1e-8);
}

TEST(EightPoint, PlaneThroughBothCentersIsDegenerate) {
  // Both centers lie in y = 0, so every point of that plane sits on a single epipolar line pair.
  const Pose t_sq = Pose::from_translation(Vec3(1, 0, 0));
  std::vector<Eigen::Vector2d> q, v;
  for (int i = 0; i < 8; ++i) {
    const Vec3 x(-0.8 + 0.2 * i, 0.0, 3.0 + 0.3 * i);
    q.push_back(x.head<2>() / x.z());
    const Vec3 y = t_sq * x;
    v.push_back(y.head<2>() / y.z());
  }
  EXPECT_THROW(eight_point(q, v), DegeneracyError);
}

TEST(EightPoint, TooFewPairs) {
  std::vector<Eigen::Vector2d> seven(7, Eigen::Vector2d::Zero());
  EXPECT_THROW(eight_point(seven, seven), InsufficientDataError);
}

TEST(DecomposeEssential, PureTranslationSignFromCheirality) {
  std::mt19937_64 rng(3);
  const Pose t_sq = Pose::from_translation(Vec3(1, 0, 0));
  const auto fx = exact_matches(kK, Pose::identity(), t_sq, 20, rng);
  const auto p = normalized_pairs(fx.matches);
  const auto est = decompose_essential(hat(Vec3::UnitX()), p.query, p.view);
  EXPECT_LT((est.rotation - Rotation::Identity()).norm(), 1e-12);
  EXPECT_LT((est.direction - Vec3::UnitX()).norm(), 1e-12);
  EXPECT_EQ(est.inliers.size(), 20u);
  EXPECT_EQ(est.direction_of_transform, TransformDirection::query_to_rendered);
}

TEST(DecomposeEssential, SyntheticPose) {
  std::mt19937_64 rng(4);
  const Vec3 dir = Vec3(0.6, 0.64, 0.48).normalized();
  const Pose t_sq{testing::rotx(deg(5)) * testing::rotz(deg(15)), 0.5 * dir};
  const auto fx = exact_matches(kK, Pose::identity(), t_sq, 40, rng);
  const auto est = decompose_essential(hat(t_sq.translation) * t_sq.rotation, fx.matches, kK);
  EXPECT_LT(rotation_angle(est.rotation, t_sq.rotation), 1e-6);
  EXPECT_LT((est.direction - dir).norm(), 1e-6);
}

TEST(DecomposeEssential, MixedDepthsHaveNoMajority) {
  // Half the points lie in front of both cameras, half behind both. Behind-both
  // points alone are explained by the factorization with -t, so no factorization
  // wins a strict majority of the mixture.
  const Pose t_sq{testing::roty(deg(5)), Vec3(0.5, 0.1, 0.05)};
  std::mt19937_64 rng(5);
  std::vector<Eigen::Vector2d> q, v;
  for (int i = 0; i < 20; ++i) {
    Vec3 x = testing::uniform_vec(rng, Vec3(-1, -1, 3), Vec3(1, 1, 6));
    if (i % 2) x = -x;
    const Vec3 y = t_sq * x;
    ASSERT_GT(x.z() * y.z(), 0.0);
    q.push_back(x.head<2>() / x.z());
    v.push_back(y.head<2>() / y.z());
  }
  EXPECT_THROW(decompose_essential(hat(t_sq.translation) * t_sq.rotation, q, v), CheiralityError);

  // The behind-both half alone flips the sign of the direction.
  std::vector<Eigen::Vector2d> qb, vb;
  for (std::size_t i = 1; i < q.size(); i += 2) {
    qb.push_back(q[i]);
    vb.push_back(v[i]);
  }
  const auto mirrored = decompose_essential(hat(t_sq.translation) * t_sq.rotation, qb, vb);
  EXPECT_LT((mirrored.direction + t_sq.translation.normalized()).norm(), 1e-9);
}

TEST(DecomposeEssential, RandomPosesProperty) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose t_sq{so3_exp(testing::random_phi(rng, 0.3)), (0.2 + 0.8 * std::uniform_real_distribution<>(0, 1)(rng)) *
                                                                 testing::random_unit(rng)};
    const auto fx = exact_matches(kK, Pose::identity(), t_sq, 30, rng);
    ASSERT_GE(fx.matches.size(), 8u);
    const auto p = normalized_pairs(fx.matches);
    const auto est = decompose_essential(eight_point(p.query, p.view), p.query, p.view);
    EXPECT_LT(rotation_angle(est.rotation, t_sq.rotation), 1e-6) << trial;
    EXPECT_LT((est.direction - t_sq.translation.normalized()).norm(), 1e-6) << trial;
  }
}

TEST(RelativePoseEstimate, InvertedIsInverse) {
  RelativePoseEstimate e;
  e.rotation = testing::rotz(0.3) * testing::rotx(0.1);
  e.direction = Vec3(0.6, 0.0, 0.8);
  const auto inv = e.inverted();
  EXPECT_EQ(inv.direction_of_transform, TransformDirection::rendered_to_query);
  EXPECT_LT((inv.rotation - e.rotation.transpose()).norm(), 1e-15);
  EXPECT_LT((inv.direction + e.rotation.transpose() * e.direction).norm(), 1e-15);
  const auto back = inv.inverted();
  EXPECT_LT((back.direction - e.direction).norm(), 1e-15);
}

CorrespondenceSet with_outliers(const CorrespondenceSet& clean, std::size_t n_out, std::mt19937_64& rng) {
  CorrespondenceSet out = clean;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    out.records.push_back({{u(rng) * kK.width, u(rng) * kK.height}, {u(rng) * kK.width, u(rng) * kK.height}, 1.0});
  }
  return out;
}

TEST(EstimateRelativePose, ExactMatchesWithOutliers) {
  std::mt19937_64 rng(7);
  const Pose t_sq{testing::rotz(deg(10)), Vec3(0.2, 0, 0.02)};
  const auto fx = exact_matches(kK, Pose::identity(), t_sq, 100, rng);
  const auto corr = with_outliers(fx.matches, 30, rng);
  RansacConfig cfg;
  cfg.inlier_threshold_px = 1.0;
  cfg.seed = 7;
  const auto est = estimate_relative_pose(corr, kK, cfg);
  std::size_t true_inliers = 0;
  for (std::size_t i : est.inliers) true_inliers += i < 100;
  EXPECT_EQ(true_inliers, 100u);
  EXPECT_LT(rotation_angle(est.rotation, t_sq.rotation), 1e-4);
  EXPECT_LT(direction_angle(est.direction, t_sq.translation), 1e-4);
}

TEST(EstimateRelativePose, TooFewMatches) {
  std::mt19937_64 rng(8);
  const auto fx = exact_matches(kK, Pose::identity(), Pose::from_translation(Vec3(0.3, 0, 0)), 7, rng);
  EXPECT_THROW(estimate_relative_pose(fx.matches, kK, {}), InsufficientDataError);
}

TEST(EstimateRelativePose, Deterministic) {
  std::mt19937_64 rng(9);
  const Pose t_sq{testing::roty(deg(4)), Vec3(0.3, 0.05, 0.0)};
  auto corr = with_outliers(exact_matches(kK, Pose::identity(), t_sq, 80, rng).matches, 40, rng);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& r : corr.records) r.view_point = {r.view_point.u + n(rng), r.view_point.v + n(rng)};
  RansacConfig cfg;
  cfg.seed = 42;
  const auto a = estimate_relative_pose(corr, kK, cfg);
  const auto b = estimate_relative_pose(corr, kK, cfg);
  EXPECT_EQ(a.rotation, b.rotation);
  EXPECT_EQ(a.direction, b.direction);
  EXPECT_EQ(a.inliers, b.inliers);
}

TEST(EstimateRelativePose, InlierCountGrowsWithThreshold) {
  std::mt19937_64 rng(10);
  const Pose t_sq{testing::rotz(deg(6)), Vec3(0.25, -0.05, 0.03)};
  auto corr = with_outliers(exact_matches(kK, Pose::identity(), t_sq, 150, rng).matches, 50, rng);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& r : corr.records) r.view_point = {r.view_point.u + n(rng), r.view_point.v + n(rng)};
  std::size_t previous = 0;
  for (double th : {0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    RansacConfig cfg;
    cfg.seed = 3;
    cfg.inlier_threshold_px = th;
    const std::size_t count = estimate_relative_pose(corr, kK, cfg).inliers.size();
    EXPECT_GE(count, previous) << "threshold " << th;
    previous = count;
  }
}

TEST(EstimateRelativePose, ConfigValidation) {
  RansacConfig cfg;
  cfg.min_matches = 7;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg = {};
  cfg.confidence = 1.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
  cfg = {};
  cfg.inlier_threshold_px = 0.0;
  EXPECT_THROW(cfg.validate(), PreconditionError);
}

TEST(EpipolarLine, HandComputed) {
  const Intrinsics unit{1, 1, 0, 0, 10, 10};
  const Eigen::Vector3d line = epipolar_line(unit, Rotation::Identity(), Vec3(1, 0, 0), {0.3, 0.7});
  EXPECT_LT((line - Eigen::Vector3d(0, -1, 0.7)).norm(), 1e-15);
  EXPECT_THROW(epipolar_line(unit, Rotation::Identity(), Vec3::Zero(), {0.3, 0.7}), DegeneracyError);
}

TEST(EpipolarDistance, HandComputed) {
  const Eigen::Vector3d p(0, -1, 0.7);
  EXPECT_NEAR(epipolar_distance({0.3, 0.7}, p), 0.0, 1e-15);
  EXPECT_NEAR(epipolar_distance({0, 2}, p), -1.3, 1e-15);
  EXPECT_NEAR(epipolar_distance({0, 2}, 5.0 * p), -1.3, 1e-12);
}

TEST(EpipolarDistance, PositiveScaleInvariance) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p = testing::gaussian_vec(rng);
    const PixelPoint u{testing::gaussian_vec(rng).x() * 100, testing::gaussian_vec(rng).y() * 100};
    const double s = std::exp(testing::gaussian_vec(rng).x() * 3);
    EXPECT_NEAR(epipolar_distance(u, s * p), epipolar_distance(u, p), 1e-12 * (1 + std::abs(epipolar_distance(u, p))));
  }
}

TEST(EpipolarDistance, ZeroOnExactMatches) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose query = testing::random_pose(rng, 0.1, 0.05);
    const Pose view = Pose{so3_exp(testing::random_phi(rng, 0.2)), testing::gaussian_vec(rng, 0.3)} * query;
    const auto fx = exact_matches(kK, query, view, 50, rng);
    const Pose t_sq = view * query.inverse();
    for (const auto& r : fx.matches.records) {
      const double d = epipolar_distance(r.view_point, epipolar_line(kK, t_sq.rotation, t_sq.translation, r.query_point));
      ASSERT_LT(std::abs(d), 1e-9);
    }
  }
}

}  // namespace
}  // namespace mvrefine
