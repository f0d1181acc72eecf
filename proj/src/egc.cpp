#include "mvrefine/egc.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "mvrefine/epipolar.hpp"
#include "mvrefine/error.hpp"

namespace mvrefine {
namespace {

constexpr double kMinBaseline = 1e-12;
constexpr double kLambdaMax = 1e12;
// Objective values at or below this are exact fits up to round-off.
constexpr double kObjectiveZero = 1e-12;

using Mat6 = Eigen::Matrix<double, 6, 6>;

double view_factor(const EgcView& view, std::size_t candidates) {
  if (view.role == ViewRole::reference || candidates == 0) return 1.0;
  return 1.0 / static_cast<double>(candidates);
}

struct Evaluation {
  double value = 0.0;
  Mat6 hessian = Mat6::Zero();
  Vec6 gradient = Vec6::Zero();
};

// F at `estimate` over the active views with frozen scales. Returns nullopt if
// an active view lost its baseline.
std::optional<Evaluation> evaluate(const Pose& estimate, const EgcProblem& problem, const std::vector<bool>& active,
                                   std::span<const double> sigmas, std::size_t candidates, bool with_derivatives) {
  Evaluation ev;
  for (std::size_t v = 0; v < problem.views.size(); ++v) {
    if (!active[v]) continue;
    const EgcView& view = problem.views[v];
    const double c = view_factor(view, candidates);
    const double sigma = sigmas[v];
    double sum = 0.0;
    for (const MatchRecord& m : view.matches.records) {
      double d = 0.0;
      Eigen::Matrix<double, 1, 6> jac;
      if (with_derivatives) {
        const auto dj = distance_jacobian(estimate, view.pose, problem.intrinsics, m);
        if (!dj) return std::nullopt;
        d = dj->distance;
        jac = dj->jacobian;
      } else {
        const Pose rel = view.pose * estimate.inverse();
        if (!(rel.translation.norm() > kMinBaseline)) return std::nullopt;
        const Eigen::Vector3d line = epipolar_line(problem.intrinsics, rel.rotation, rel.translation, m.query_point);
        d = std::hypot(line.x(), line.y()) > 0.0 ? epipolar_distance(m.view_point, line) : 0.0;
      }
      const double r = d / sigma;
      const HuberValue h = huber(r);
      sum += h.value;
      if (with_derivatives) {
        const Eigen::Matrix<double, 1, 6> jr = jac / sigma;
        ev.hessian.noalias() += (c * h.weight) * jr.transpose() * jr;
        ev.gradient.noalias() += (c * h.weight * r) * jr.transpose();
      }
    }
    ev.value += 0.5 * c * sum;
  }
  return ev;
}

}  // namespace

std::size_t EgcProblem::candidate_count() const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.role == ViewRole::candidate ? 1 : 0;
  return n;
}

void EgcProblem::validate() const {
  intrinsics.validate();
  for (const auto& v : views) {
    if (!v.matches.empty()) return;
  }
  throw PreconditionError("egc: problem needs at least one view with one match");
}

void LmConfig::validate() const {
  if (max_iterations < 0) throw PreconditionError("lm: max_iterations must be >= 0");
  if (!(lambda_init > 0.0)) throw PreconditionError("lm: lambda_init must be positive");
  if (!(lambda_up > 1.0)) throw PreconditionError("lm: lambda_up must exceed 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw PreconditionError("lm: lambda_down must be in (0, 1)");
  if (!(step_tolerance >= 0.0 && objective_tolerance >= 0.0)) throw PreconditionError("lm: negative tolerance");
  if (!(sigma_floor_px > 0.0)) throw PreconditionError("lm: sigma floor must be positive");
}

std::vector<ViewResiduals> residuals(const Pose& estimate, const EgcProblem& problem) {
  std::vector<ViewResiduals> out(problem.views.size());
  const Pose inv = estimate.inverse();
  for (std::size_t v = 0; v < problem.views.size(); ++v) {
    const EgcView& view = problem.views[v];
    const Pose rel = view.pose * inv;  // T_sq
    if (!(rel.translation.norm() > kMinBaseline)) {
      out[v].excluded = true;
      continue;
    }
    out[v].distances.reserve(view.matches.size());
    for (const MatchRecord& m : view.matches.records) {
      const Eigen::Vector3d line = epipolar_line(problem.intrinsics, rel.rotation, rel.translation, m.query_point);
      out[v].distances.push_back(std::hypot(line.x(), line.y()) > 0.0 ? epipolar_distance(m.view_point, line) : 0.0);
    }
  }
  return out;
}

double sigma_hat(std::span<const double> distances, double floor) {
  if (distances.size() < 2) throw PreconditionError("sigma_hat: need at least two distances");
  double sq = 0.0;
  for (double d : distances) sq += d * d;
  const double sigma = std::sqrt(sq / static_cast<double>(distances.size() - 1));
  return std::max(sigma, floor);
}

std::vector<double> residual_scales(const std::vector<ViewResiduals>& res, double floor) {
  std::vector<double> out(res.size(), std::numeric_limits<double>::quiet_NaN());
  double pooled_sq = 0.0;
  std::size_t pooled_n = 0;
  for (const auto& r : res) {
    if (r.excluded) continue;
    for (double d : r.distances) pooled_sq += d * d;
    pooled_n += r.distances.size();
  }
  const double pooled =
      std::max(std::sqrt(pooled_sq / static_cast<double>(std::max<std::size_t>(pooled_n, 2) - 1)), floor);
  for (std::size_t v = 0; v < res.size(); ++v) {
    if (res[v].excluded) continue;
    out[v] = res[v].distances.size() >= 2 ? sigma_hat(res[v].distances, floor) : pooled;
  }
  return out;
}

HuberValue huber(double r) {
  const double a = std::abs(r);
  if (a <= 1.0) return {r * r, 1.0};
  return {2.0 * a - 1.0, 1.0 / a};
}

double objective(const Pose& estimate, const EgcProblem& problem, std::span<const double> sigmas) {
  if (sigmas.size() != problem.views.size()) throw PreconditionError("objective: one scale per view required");
  const auto res = residuals(estimate, problem);
  std::size_t candidates = 0;
  for (std::size_t v = 0; v < res.size(); ++v) {
    if (!res[v].excluded && problem.views[v].role == ViewRole::candidate) ++candidates;
  }
  double f = 0.0;
  for (std::size_t v = 0; v < res.size(); ++v) {
    if (res[v].excluded) continue;
    double sum = 0.0;
    for (double d : res[v].distances) sum += huber(d / sigmas[v]).value;
    f += 0.5 * view_factor(problem.views[v], candidates) * sum;
  }
  return f;
}

double objective(const Pose& estimate, const EgcProblem& problem, double sigma_floor) {
  const auto scales = residual_scales(residuals(estimate, problem), sigma_floor);
  return objective(estimate, problem, scales);
}

std::optional<DistanceJacobian> distance_jacobian(const Pose& estimate, const Pose& view_pose, const Intrinsics& k,
                                                  const MatchRecord& match) {
  // T_sq(delta) = A * exp(-delta) with A = T_s * T^-1. To first order
  //   R_sq x_q = y + R_a [x_q]^ phi,   t_sq = t_a - R_a rho,   y = R_a x_q,
  // and the line normal n = t_sq x (R_sq x_q) moves by
  //   dn = [y]^ R_a drho + [t_a]^ R_a [x_q]^ dphi.
  const Pose a = view_pose * estimate.inverse();
  if (!(a.translation.norm() > kMinBaseline)) return std::nullopt;
  const Eigen::Vector3d xq = normalize(k, match.query_point);
  const Eigen::Vector3d xs = normalize(k, match.view_point);
  const Eigen::Vector3d y = a.rotation * xq;
  const Eigen::Vector3d n = a.translation.cross(y);

  const double px = n.x() / k.fx;
  const double py = n.y() / k.fy;
  const double den2 = px * px + py * py;
  if (den2 == 0.0) return DistanceJacobian{0.0, Eigen::Matrix<double, 1, 6>::Zero()};
  const double den = std::sqrt(den2);
  const double num = xs.dot(n);

  // d = num / den;  dd/dn = x_s / den - num / den^3 * (px / fx, py / fy, 0)
  Eigen::RowVector3d dd_dn = xs.transpose() / den;
  dd_dn.x() -= num / (den2 * den) * px / k.fx;
  dd_dn.y() -= num / (den2 * den) * py / k.fy;

  DistanceJacobian out;
  out.distance = num / den;
  out.jacobian.leftCols<3>() = dd_dn * hat(y) * a.rotation;
  out.jacobian.rightCols<3>() = dd_dn * hat(a.translation) * a.rotation * hat(xq);
  return out;
}

EgcResult refine_lm(const Pose& initial, const EgcProblem& problem, const LmConfig& cfg) {
  problem.validate();
  cfg.validate();

  EgcResult result;
  result.pose = initial;

  const auto res0 = residuals(initial, problem);
  std::vector<bool> active(problem.views.size(), false);
  std::size_t candidates = 0;
  bool any = false;
  for (std::size_t v = 0; v < res0.size(); ++v) {
    active[v] = !res0[v].excluded && !problem.views[v].matches.empty();
    if (res0[v].excluded) result.excluded_views.push_back(v);
    if (active[v]) {
      any = true;
      if (problem.views[v].role == ViewRole::candidate) ++candidates;
    }
  }
  if (!any) return result;

  // Scales are estimated once at the starting pose and held fixed, so F is a
  // single function for the whole run and accepted values are comparable.
  result.per_view_sigma = residual_scales(res0, cfg.sigma_floor_px);

  Pose pose = initial;
  auto current = evaluate(pose, problem, active, result.per_view_sigma, candidates, true);
  result.objective_initial = current->value;
  result.objective_final = current->value;
  result.objective_history.push_back(current->value);

  double lambda = cfg.lambda_init;
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (current->value <= kObjectiveZero || current->gradient.isZero(0.0)) {
      result.converged = true;
      break;
    }
    bool accepted = false;
    bool stop = false;
    while (!accepted) {
      Mat6 damped = current->hessian;
      const double diag_floor = 1e-12 * std::max(current->hessian.diagonal().maxCoeff(), 1e-300);
      for (int i = 0; i < 6; ++i) damped(i, i) += lambda * std::max(current->hessian(i, i), diag_floor);
      const Vec6 delta = damped.ldlt().solve(-current->gradient);
      if (!delta.allFinite()) {
        lambda *= cfg.lambda_up;
      } else {
        const Pose trial = se3_exp(Twist::from_vector(delta)) * pose;
        auto next = evaluate(trial, problem, active, result.per_view_sigma, candidates, true);
        if (next && next->value < current->value) {
          const double decrease = (current->value - next->value) / current->value;
          pose = trial;
          current = std::move(next);
          lambda = std::max(lambda * cfg.lambda_down, 1e-15);
          accepted = true;
          ++result.iterations_used;
          result.objective_history.push_back(current->value);
          if (delta.norm() < cfg.step_tolerance || decrease < cfg.objective_tolerance) {
            result.converged = true;
            stop = true;
          }
        } else {
          lambda *= cfg.lambda_up;
        }
      }
      if (!accepted && lambda >= kLambdaMax) {
        stop = true;  // best-so-far pose, converged stays false
        break;
      }
    }
    if (stop) break;
  }
  result.pose = pose;
  result.objective_final = current->value;
  return result;
}

}  // namespace mvrefine
