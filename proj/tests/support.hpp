#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "mvrefine/camera.hpp"
#include "mvrefine/lie.hpp"
#include "mvrefine/matching.hpp"

namespace mvrefine::testing {

inline Rotation rotx(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Rotation roty(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Rotation rotz(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }
inline double deg(double d) { return d * std::numbers::pi / 180.0; }

inline Intrinsics default_k() { return {500.0, 500.0, 320.0, 240.0, 640, 480}; }

inline Vec3 gaussian_vec(std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

inline Vec3 uniform_vec(std::mt19937_64& rng, const Vec3& lo, const Vec3& hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return lo + (hi - lo).cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
}

inline Vec3 random_unit(std::mt19937_64& rng) { return gaussian_vec(rng).normalized(); }

/// Rotation vector with uniform axis and angle in [0, max_angle].
inline Vec3 random_phi(std::mt19937_64& rng, double max_angle) {
  std::uniform_real_distribution<double> u(0.0, max_angle);
  return u(rng) * random_unit(rng);
}

inline Pose random_pose(std::mt19937_64& rng, double max_angle, double t_scale) {
  return {so3_exp(random_phi(rng, max_angle)), gaussian_vec(rng, t_scale)};
}

/// Exact matches between a query camera at `query` and a view at `view`, built
/// from world points sampled in [lo, hi] that both cameras see.
struct TwoViewFixture {
  std::vector<Vec3> points;
  CorrespondenceSet matches;
};

inline TwoViewFixture exact_matches(const Intrinsics& k, const Pose& query, const Pose& view, std::size_t n,
                                    std::mt19937_64& rng, const Vec3& lo = Vec3(-1.0, -1.0, 3.0),
                                    const Vec3& hi = Vec3(1.0, 1.0, 6.0), const std::string& view_id = "ref") {
  TwoViewFixture out;
  out.matches.view_id = view_id;
  int attempts = 0;
  while (out.points.size() < n && attempts++ < 100000) {
    const Vec3 x = uniform_vec(rng, lo, hi);
    const auto pq = project(k, query, x);
    const auto pv = project(k, view, x);
    if (!pq || !pv || !k.contains(*pq) || !k.contains(*pv)) continue;
    out.points.push_back(x);
    out.matches.records.push_back({*pq, *pv, 1.0});
  }
  return out;
}

/// Normalized image coordinates (x, y) of a pixel.
inline Eigen::Vector2d normalized_xy(const Intrinsics& k, const PixelPoint& p) { return normalize(k, p).head<2>(); }

}  // namespace mvrefine::testing

#include "mvrefine/egc.hpp"
#include "mvrefine/synth.hpp"

namespace mvrefine::testing {

inline SceneBox room_box() { return {Vec3(-2.0, -1.5, 2.0), Vec3(2.0, 1.5, 5.0)}; }

/// Query ground truth near the origin looking down +z.
inline Pose near_origin_pose(std::mt19937_64& rng) {
  return {so3_exp(gaussian_vec(rng, 0.03)), gaussian_vec(rng, 0.05)};
}

/// Pose moved by `t_m` meters and `r_rad` radians in random directions.
inline Pose offset_pose(const Pose& base, double t_m, double r_rad, std::mt19937_64& rng) {
  return {so3_exp(r_rad * random_unit(rng)) * base.rotation, base.translation + t_m * random_unit(rng)};
}

struct EgcFixture {
  SyntheticScene scene;
  Pose ground_truth;
  EgcProblem problem;
  std::vector<SyntheticMatches> matches;
};

/// Reference view near the truth plus `candidates` perturbed views, matched
/// against the query with the given noise.
inline EgcFixture egc_fixture(std::uint64_t seed, const NoiseSpec& noise, std::size_t candidates = 3,
                              std::size_t points = 300) {
  std::mt19937_64 rng(seed);
  EgcFixture f;
  f.scene = generate_scene(points, room_box(), default_k(), mix_seed(seed, 1));
  f.ground_truth = near_origin_pose(rng);
  f.problem.intrinsics = f.scene.intrinsics;
  const Pose ref = offset_pose(f.ground_truth, 0.05, deg(2), rng);
  for (std::size_t i = 0; i <= candidates; ++i) {
    const bool is_ref = i == 0;
    const Pose pose = is_ref ? ref : offset_pose(ref, 0.05, deg(1), rng);
    NoiseSpec n = noise;
    n.seed = mix_seed(noise.seed, i);
    const std::string id = is_ref ? "ref" : "c" + std::to_string(i - 1);
    f.matches.push_back(synth_match(f.scene, f.ground_truth, pose, n, id));
    f.problem.views.push_back({is_ref ? ViewRole::reference : ViewRole::candidate, pose, f.matches.back().set});
  }
  return f;
}

}  // namespace mvrefine::testing
