#pragma once

// Multi-view consistency: turn scale-free relative poses between the query and
// several rendered views with known absolute poses into one absolute pose.
//
// Each view s gives T_q = T_qs * T_s with T_qs = (R_qs, s_s * t_qs), so
//
//     R_q = R_qs * R_s
//     t_q = R_qs * t_s + s_s * t_qs.
//
// The joint cost sums ||log(R^-1 R_qs R_s)||^2 and ||R^-1 (R_qs t_s + s_s t_qs - t)||^2
// over the views. R^-1 is orthogonal and leaves the translation norms unchanged,
// so the translation terms do not depend on R and the problem splits exactly:
// rotation averaging for R, then linear least squares for (t, s_1..s_V).

#include <span>
#include <vector>

#include "mvrefine/epipolar.hpp"
#include "mvrefine/lie.hpp"

namespace mvrefine {

struct ViewObservation {
  Pose absolute_pose;            // T_s, world-to-camera of the rendered view
  RelativePoseEstimate relative;  // either direction; converted to (R_qs, t_qs) internally
  double weight = 1.0;
};

struct RotationMean {
  Rotation rotation = Rotation::Identity();
  int iterations = 0;
  bool dispersion_warning = false;  // candidates at least pi/2 apart
};

struct ScaleTranslationSolution {
  Vec3 translation = Vec3::Zero();
  std::vector<double> scales;
  double residual = 0.0;  // RMS of the per-view translation discrepancy, meters
  double condition_number = 0.0;
};

struct ConsistencySolution {
  Pose pose;
  std::vector<double> scales;
  double rotation_residual = 0.0;     // RMS geodesic discrepancy, radians
  double translation_residual = 0.0;  // RMS, meters
  double condition_number = 0.0;
  bool dispersion_warning = false;
};

/// Largest condition number of the scale/translation system that is accepted.
inline constexpr double kMaxScaleConditionNumber = 1e8;

/// R_qs * R_s for each observation.
std::vector<Rotation> compose_rotation_candidates(std::span<const ViewObservation> observations);

/// Weighted geodesic L2 mean: chordal initialization, then tangent-space
/// fixed-point iterations until the update is below 1e-12 rad (max 50).
RotationMean average_rotations(std::span<const Rotation> candidates, std::span<const double> weights = {});

/// sum_i w_i ||log(R^T R_i)||^2
double rotation_cost(const Rotation& rotation, std::span<const Rotation> candidates,
                     std::span<const double> weights = {});

/// Least squares over (t, s_1..s_V) of sum_s w_s ||R_qs t_s + s_s t_qs - t||^2.
/// Throws PreconditionError below two observations and ScaleDegeneracyError
/// when the condition number exceeds kMaxScaleConditionNumber.
ScaleTranslationSolution solve_scales_translation(std::span<const ViewObservation> observations);

ConsistencySolution coarse_pose(std::span<const ViewObservation> observations);

}  // namespace mvrefine
