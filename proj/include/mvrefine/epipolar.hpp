#pragma once

// Two-view relative pose from calibrated 2D-2D matches, plus the epipolar
// line / point-to-line distance used both as the RANSAC inlier test and as the
// refinement residual.
//
// Essential matrices follow x_view^T E x_query = 0 with E = [t_sq]^ R_sq, where
// T_sq = T_view * T_query^-1 carries query-camera coordinates into the view
// camera frame.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "mvrefine/camera.hpp"
#include "mvrefine/lie.hpp"
#include "mvrefine/matching.hpp"

namespace mvrefine {

enum class TransformDirection {
  rendered_to_query,  // (R_qs, t_qs): view-s camera frame -> query camera frame
  query_to_rendered,  // (R_sq, t_sq): query camera frame -> view-s camera frame
};

struct RelativePoseEstimate {
  Rotation rotation = Rotation::Identity();
  Vec3 direction = Vec3::UnitX();  // unit norm; true translation is s * direction for unknown s > 0
  std::vector<std::size_t> inliers;
  TransformDirection direction_of_transform = TransformDirection::query_to_rendered;

  /// Same relative motion expressed in the opposite direction.
  RelativePoseEstimate inverted() const;
};

struct RansacConfig {
  int max_iterations = 2000;
  double inlier_threshold_px = 1.5;
  double confidence = 0.999;
  std::size_t min_matches = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Normalized 8-point algorithm with Hartley conditioning. Inputs are
/// normalized image coordinates (x, y) of the same matches in the query and the
/// view. Result has singular values (s, s, 0) and unit Frobenius norm.
/// Throws InsufficientDataError below 8 pairs and DegeneracyError for a
/// rank-deficient design matrix.
Eigen::Matrix3d eight_point(std::span<const Eigen::Vector2d> query, std::span<const Eigen::Vector2d> view);

/// Picks the (R, +-t) factorization of E with the most points in front of both
/// cameras. The estimate's inliers are the matches passing that test.
/// Throws CheiralityError if no factorization has a strict majority.
RelativePoseEstimate decompose_essential(const Eigen::Matrix3d& essential, std::span<const Eigen::Vector2d> query,
                                         std::span<const Eigen::Vector2d> view);
RelativePoseEstimate decompose_essential(const Eigen::Matrix3d& essential, const CorrespondenceSet& matches,
                                         const Intrinsics& k);

/// Mean of the point-to-epipolar-line distances in both images, in pixels.
double symmetric_epipolar_distance(const Eigen::Matrix3d& essential, const Intrinsics& k,
                                   const Eigen::Vector3d& query_normalized, const Eigen::Vector3d& view_normalized);

/// Seeded RANSAC over 8-point samples. Support counts only matches within the
/// threshold that the model's best factorization places in front of both
/// cameras. Every new best model is refit on its consensus set while that
/// raises support.
/// Returns the estimate in the query_to_rendered direction.
RelativePoseEstimate estimate_relative_pose(const CorrespondenceSet& matches, const Intrinsics& k,
                                            const RansacConfig& cfg);

/// Pixel-space epipolar line in the view image of query pixel u_i:
/// K^-T [t_sq]^ R_sq K^-1 u_i. Not normalized.
Eigen::Vector3d epipolar_line(const Intrinsics& k, const Rotation& r_sq, const Vec3& t_sq, const PixelPoint& u_i);

/// Signed distance u_j^T p / sqrt(p_x^2 + p_y^2) in pixels.
double epipolar_distance(const PixelPoint& u_j, const Eigen::Vector3d& line);

}  // namespace mvrefine
