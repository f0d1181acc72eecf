#pragma once

// Robust refinement of the query pose against epipolar constraints from every
// rendered view.
//
// For an estimate T of the query pose and a view with absolute pose T_s, the
// relative motion is T_sq = T_s * T^-1. Each match (u_i in the query, u_j in the
// view) contributes the signed pixel distance d of u_j to the epipolar line
// K^-T [t_sq]^ R_sq K^-1 u_i. Distances are divided by a per-view residual
// scale sigma, passed through a Huber penalty, and combined as
//
//     F(T) = 1/2 [ sum_ref rho(d / sigma) + (1 / L) sum_{candidates} sum rho(d / sigma) ].
//
// F is minimized with Levenberg-Marquardt over a left-multiplied se(3)
// increment, T <- exp(delta) * T, using Huber IRLS weights.

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvrefine/camera.hpp"
#include "mvrefine/lie.hpp"
#include "mvrefine/matching.hpp"

namespace mvrefine {

enum class ViewRole { reference, candidate };

struct EgcView {
  ViewRole role = ViewRole::candidate;
  Pose pose;  // absolute pose of the rendered view
  CorrespondenceSet matches;
};

struct EgcProblem {
  Intrinsics intrinsics;
  std::vector<EgcView> views;  // reference (if any) first, then candidates

  std::size_t candidate_count() const;
  /// Throws PreconditionError unless some view has at least one match.
  void validate() const;
};

struct LmConfig {
  int max_iterations = 50;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double step_tolerance = 1e-10;
  double objective_tolerance = 1e-9;
  /// Lower bound on the per-view residual scale, pixels.
  double sigma_floor_px = 1e-4;

  void validate() const;
};

struct EgcResult {
  Pose pose;
  double objective_initial = 0.0;
  double objective_final = 0.0;
  int iterations_used = 0;  // accepted steps
  std::vector<double> per_view_sigma;
  std::vector<double> objective_history;  // initial value, then every accepted step
  std::vector<std::size_t> excluded_views;
  bool converged = false;
};

struct ViewResiduals {
  bool excluded = false;  // baseline too short to define epipolar lines
  std::vector<double> distances;
};

/// Signed point-to-epipolar-line distances for every match of every view.
std::vector<ViewResiduals> residuals(const Pose& estimate, const EgcProblem& problem);

/// sqrt(sum d^2 / (M - 1)), or `floor` if that is smaller. Needs M >= 2.
double sigma_hat(std::span<const double> distances, double floor = 1e-12);

/// Residual scale per view; views with fewer than two matches use the pooled
/// value over all active views. Excluded views get NaN.
std::vector<double> residual_scales(const std::vector<ViewResiduals>& res, double floor);

struct HuberValue {
  double value;
  double weight;  // IRLS weight: 1 inside, 1/|r| outside
};

/// r^2 for |r| <= 1, 2|r| - 1 otherwise.
HuberValue huber(double r);

/// F(T) with the given per-view scales.
double objective(const Pose& estimate, const EgcProblem& problem, std::span<const double> sigmas);
/// F(T) with scales estimated at T itself.
double objective(const Pose& estimate, const EgcProblem& problem, double sigma_floor = 1e-4);

/// Distance of one match and its derivative w.r.t. the left twist (rho, phi)
/// applied to the estimate. nullopt when the baseline is too short.
struct DistanceJacobian {
  double distance;
  Eigen::Matrix<double, 1, 6> jacobian;
};
std::optional<DistanceJacobian> distance_jacobian(const Pose& estimate, const Pose& view_pose, const Intrinsics& k,
                                                  const MatchRecord& match);

EgcResult refine_lm(const Pose& initial, const EgcProblem& problem, const LmConfig& cfg);

}  // namespace mvrefine
