#pragma once

// Synthetic scenes standing in for a trained scene representation and a
// learned matcher: static 3D points, exact projections, and correspondences
// with configurable pixel noise, dropout and outliers. Every random draw comes
// from an explicit seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvrefine/camera.hpp"
#include "mvrefine/lie.hpp"
#include "mvrefine/matching.hpp"

namespace mvrefine {

struct SceneBox {
  Vec3 min = Vec3(-1.0, -1.0, 3.0);
  Vec3 max = Vec3(1.0, 1.0, 6.0);

  void validate() const;
  bool contains(const Vec3& p) const;
};

struct ScenePoint {
  std::size_t id = 0;
  Vec3 position = Vec3::Zero();
};

struct SyntheticScene {
  std::vector<ScenePoint> points;
  Intrinsics intrinsics;
  std::uint64_t seed = 0;
};

struct Observation {
  std::size_t point_id = 0;
  PixelPoint pixel;
};

struct NoiseSpec {
  double pixel_sigma = 0.0;
  double outlier_rate = 0.0;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PerturbationSpec {
  double sigma_t = 0.0;      // meters, per axis
  double sigma_r_deg = 0.0;  // degrees, spread of the rotation angle
  std::size_t count = 1;     // L
  std::uint64_t seed = 0;

  void validate() const;
};

/// Correspondences plus the oracle-only ground truth behind them.
struct SyntheticMatches {
  CorrespondenceSet set;
  std::vector<std::size_t> point_ids;
  std::vector<bool> is_outlier;
};

/// Throws PreconditionError for fewer than 8 points or an invalid box.
SyntheticScene generate_scene(std::size_t n_points, const SceneBox& box, const Intrinsics& k, std::uint64_t seed);

/// Points in front of the camera that land inside the image.
std::vector<Observation> observe(const SyntheticScene& scene, const Pose& pose);

SyntheticMatches synth_match(const SyntheticScene& scene, const Pose& query_pose, const Pose& view_pose,
                             const NoiseSpec& noise, const std::string& view_id = "ref");

/// L poses (dR * R, t + dt): dt ~ N(0, sigma_t^2) per axis, dR a rotation by
/// |N(0, sigma_r)| degrees about a uniformly random axis.
std::vector<Pose> sample_perturbations(const Pose& base, const PerturbationSpec& spec);

/// Deterministic 64-bit mixing of seeds and salts.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_pose(const Pose& pose);

// First line: intrinsics record. Then "id x y z" per point.
std::string format_scene(const SyntheticScene& scene);
SyntheticScene parse_scene(std::string_view contents);
void save_scene(const std::filesystem::path& path, const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& path);

/// Matcher backed by a synthetic scene and the (hidden) true query pose. The
/// noise seed of each call is derived from the view pose, so results do not
/// depend on call order and the matcher is safe to share across threads.
class SyntheticMatcher : public Matcher {
 public:
  SyntheticMatcher(SyntheticScene scene, Pose query_pose, NoiseSpec noise);
  CorrespondenceSet match(const QueryView& query, const RenderedView& view) const override;

 private:
  SyntheticScene scene_;
  Pose query_pose_;
  NoiseSpec noise_;
};

}  // namespace mvrefine
