#include "mvrefine/consistency.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>

#include "mvrefine/error.hpp"

namespace mvrefine {
namespace {

constexpr int kMaxMeanIterations = 50;
constexpr double kMeanUpdateTolerance = 1e-12;

RelativePoseEstimate to_query_frame(const RelativePoseEstimate& rel) {
  return rel.direction_of_transform == TransformDirection::rendered_to_query ? rel : rel.inverted();
}

double weight_at(std::span<const double> weights, std::size_t i) { return weights.empty() ? 1.0 : weights[i]; }

}  // namespace

std::vector<Rotation> compose_rotation_candidates(std::span<const ViewObservation> observations) {
  if (observations.empty()) throw PreconditionError("compose_rotation_candidates: no observations");
  std::vector<Rotation> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) {
    out.push_back(to_query_frame(obs.relative).rotation * obs.absolute_pose.rotation);
  }
  return out;
}

double rotation_cost(const Rotation& rotation, std::span<const Rotation> candidates, std::span<const double> weights) {
  double cost = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cost += weight_at(weights, i) * so3_log(rotation.transpose() * candidates[i]).squaredNorm();
  }
  return cost;
}

RotationMean average_rotations(std::span<const Rotation> candidates, std::span<const double> weights) {
  if (candidates.empty()) throw PreconditionError("average_rotations: no candidates");
  if (!weights.empty() && weights.size() != candidates.size()) {
    throw PreconditionError("average_rotations: weight count mismatch");
  }
  double total = 0.0;
  Eigen::Matrix3d chordal = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double w = weight_at(weights, i);
    if (!(w > 0.0)) throw PreconditionError("average_rotations: weights must be positive");
    chordal += w * candidates[i];
    total += w;
  }

  RotationMean mean;
  mean.rotation = project_to_rotation(chordal / total);
  for (int it = 0; it < kMaxMeanIterations; ++it) {
    Vec3 step = Vec3::Zero();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      step += weight_at(weights, i) * so3_log(mean.rotation.transpose() * candidates[i]);
    }
    step /= total;
    mean.rotation = mean.rotation * so3_exp(step);
    mean.iterations = it + 1;
    if (step.norm() < kMeanUpdateTolerance) break;
  }
  // Keep the result exactly orthonormal after repeated products.
  mean.rotation = project_to_rotation(mean.rotation);

  for (std::size_t i = 0; i < candidates.size() && !mean.dispersion_warning; ++i) {
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (rotation_angle(candidates[i], candidates[j]) >= 0.5 * std::numbers::pi) {
        mean.dispersion_warning = true;
        break;
      }
    }
  }
  return mean;
}

ScaleTranslationSolution solve_scales_translation(std::span<const ViewObservation> observations) {
  const std::size_t views = observations.size();
  if (views < 2) {
    throw PreconditionError("solve_scales_translation: need at least two observations (3 equations, 4 unknowns)");
  }
  // Unknowns: [t (3), s_1 .. s_V]. Block for view s:  -t + s_s * t_qs = -R_qs * t_s.
  const Eigen::Index cols = 3 + static_cast<Eigen::Index>(views);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3 * static_cast<Eigen::Index>(views), cols);
  Eigen::VectorXd b(3 * static_cast<Eigen::Index>(views));
  for (std::size_t s = 0; s < views; ++s) {
    const auto& obs = observations[s];
    if (!(obs.weight > 0.0)) throw PreconditionError("solve_scales_translation: weights must be positive");
    const RelativePoseEstimate rel = to_query_frame(obs.relative);
    const double sw = std::sqrt(obs.weight);
    const Eigen::Index row = 3 * static_cast<Eigen::Index>(s);
    a.block<3, 3>(row, 0) = -sw * Eigen::Matrix3d::Identity();
    a.block<3, 1>(row, 3 + static_cast<Eigen::Index>(s)) = sw * rel.direction;
    b.segment<3>(row) = -sw * (rel.rotation * obs.absolute_pose.translation);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  ScaleTranslationSolution out;
  out.condition_number = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  if (!(out.condition_number <= kMaxScaleConditionNumber)) {
    throw ScaleDegeneracyError("solve_scales_translation: ill-conditioned scale system (condition number " +
                               std::to_string(out.condition_number) + "); baselines are parallel");
  }
  const Eigen::VectorXd x = svd.solve(b);
  out.translation = x.head<3>();
  out.scales.assign(x.data() + 3, x.data() + x.size());

  double sq = 0.0;
  for (std::size_t s = 0; s < views; ++s) {
    const RelativePoseEstimate rel = to_query_frame(observations[s].relative);
    const Vec3 r = rel.rotation * observations[s].absolute_pose.translation + out.scales[s] * rel.direction -
                   out.translation;
    sq += r.squaredNorm();
  }
  out.residual = std::sqrt(sq / static_cast<double>(views));
  return out;
}

ConsistencySolution coarse_pose(std::span<const ViewObservation> observations) {
  if (observations.size() < 2) throw PreconditionError("coarse_pose: need at least two observations");
  const std::vector<Rotation> candidates = compose_rotation_candidates(observations);
  std::vector<double> weights;
  weights.reserve(observations.size());
  for (const auto& obs : observations) weights.push_back(obs.weight);
  const RotationMean mean = average_rotations(candidates, weights);
  const ScaleTranslationSolution st = solve_scales_translation(observations);

  ConsistencySolution out;
  out.pose = {mean.rotation, st.translation};
  out.scales = st.scales;
  out.translation_residual = st.residual;
  out.condition_number = st.condition_number;
  out.dispersion_warning = mean.dispersion_warning;
  out.rotation_residual = std::sqrt(rotation_cost(mean.rotation, candidates) / static_cast<double>(candidates.size()));
  return out;
}

}  // namespace mvrefine
