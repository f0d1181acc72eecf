#include "mvrefine/epipolar.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mvrefine/error.hpp"

namespace mvrefine {
namespace {

// Relative size of the 8th singular value of the design matrix below which the
// epipolar constraints no longer pin down a unique E.
constexpr double kRankTolerance = 1e-9;
constexpr std::size_t kSampleSize = 8;
constexpr int kPolishRounds = 5;
constexpr double kPolishWiden = 3.0;

Eigen::Matrix3d hartley_transform(std::span<const Eigen::Vector2d> pts) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

// Conditioned coordinates do not preserve the equal singular values, so only
// rank 2 is enforced there.
Eigen::Matrix3d enforce_rank_two(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  s(2) = 0.0;
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Eigen::Matrix3d project_to_essential(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  const double sigma = 0.5 * (s(0) + s(1));
  Eigen::Matrix3d e = svd.matrixU() * Eigen::Vector3d(sigma, sigma, 0.0).asDiagonal() * svd.matrixV().transpose();
  return e / e.norm();
}

struct Factorization {
  Rotation rotation;
  Vec3 direction;
};

std::array<Factorization, 4> factorizations(const Eigen::Matrix3d& essential) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(essential, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Eigen::Matrix3d w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Rotation r1 = u * w * v.transpose();
  const Rotation r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2).normalized();
  return {{{r1, t}, {r1, -t}, {r2, t}, {r2, -t}}};
}

// Depths (query, view) of the point seen along x_q and x_v, with x_v ~ R x_q + t.
bool in_front_of_both(const Rotation& r, const Vec3& t, const Eigen::Vector3d& xq, const Eigen::Vector3d& xv) {
  Eigen::Matrix<double, 3, 2> a;
  a.col(0) = r * xq;
  a.col(1) = -xv;
  const Eigen::Matrix2d ata = a.transpose() * a;
  const double det = ata.determinant();
  if (!(std::abs(det) > 1e-14 * ata.trace() * ata.trace())) return false;  // parallel rays
  const Eigen::Vector2d depth = ata.inverse() * (a.transpose() * (-t));
  return depth(0) > 0.0 && depth(1) > 0.0;
}

Eigen::Vector3d lift(const Eigen::Vector2d& p) { return {p.x(), p.y(), 1.0}; }

double line_distance_px(const Eigen::Vector3d& line_normalized, const Intrinsics& k, const Eigen::Vector3d& x) {
  // Pixel line is K^-T n; its normal is (n_x / fx, n_y / fy) and the pixel
  // residual u^T K^-T n equals x^T n.
  const double nx = line_normalized.x() / k.fx;
  const double ny = line_normalized.y() / k.fy;
  const double denom = std::sqrt(nx * nx + ny * ny);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(x.dot(line_normalized)) / denom;
}

struct NormalizedMatches {
  std::vector<Eigen::Vector2d> query;
  std::vector<Eigen::Vector2d> view;
};

NormalizedMatches normalize_matches(const CorrespondenceSet& matches, const Intrinsics& k) {
  NormalizedMatches out;
  out.query.reserve(matches.size());
  out.view.reserve(matches.size());
  for (const auto& r : matches.records) {
    out.query.push_back(normalize(k, r.query_point).head<2>());
    out.view.push_back(normalize(k, r.view_point).head<2>());
  }
  return out;
}

struct Support {
  std::vector<std::size_t> inliers;
  std::vector<double> distances;
  double error_sum = 0.0;
};

Support score(const Eigen::Matrix3d& essential, const Intrinsics& k, const NormalizedMatches& m, double threshold) {
  Support s;
  for (std::size_t i = 0; i < m.query.size(); ++i) {
    const double d = symmetric_epipolar_distance(essential, k, lift(m.query[i]), lift(m.view[i]));
    if (d < threshold) {
      s.inliers.push_back(i);
      s.distances.push_back(d);
      s.error_sum += d;
    }
  }
  return s;
}

bool better(const Support& a, const Support& b) {
  if (a.inliers.size() != b.inliers.size()) return a.inliers.size() > b.inliers.size();
  return a.error_sum < b.error_sum;
}

Eigen::Matrix3d fit_subset(const NormalizedMatches& m, const std::vector<std::size_t>& idx) {
  std::vector<Eigen::Vector2d> q, v;
  q.reserve(idx.size());
  v.reserve(idx.size());
  for (std::size_t i : idx) {
    q.push_back(m.query[i]);
    v.push_back(m.view[i]);
  }
  return eight_point(q, v);
}

// Drops supporters that the best factorization of the model places behind a camera.
void keep_cheiral(const Eigen::Matrix3d& model, Support& support, const NormalizedMatches& m) {
  if (support.inliers.empty()) return;
  std::vector<Eigen::Vector2d> q, v;
  q.reserve(support.inliers.size());
  v.reserve(support.inliers.size());
  for (std::size_t i : support.inliers) {
    q.push_back(m.query[i]);
    v.push_back(m.view[i]);
  }
  Support kept;
  try {
    for (std::size_t j : decompose_essential(model, q, v).inliers) {
      kept.inliers.push_back(support.inliers[j]);
      kept.distances.push_back(support.distances[j]);
      kept.error_sum += support.distances[j];
    }
  } catch (const CheiralityError&) {
  }
  support = std::move(kept);
}

// Local optimization: least-squares refits on the matches within a widened
// threshold that shrinks back to the nominal one, kept while support grows.
void polish(Eigen::Matrix3d& model, Support& support, const Intrinsics& k, const NormalizedMatches& m,
            double threshold) {
  for (int round = 0; round < kPolishRounds; ++round) {
    const double widen = kPolishWiden - (kPolishWiden - 1.0) * round / (kPolishRounds - 1);
    const Support fit_set = score(model, k, m, widen * threshold);
    if (fit_set.inliers.size() < kSampleSize) return;
    Eigen::Matrix3d refit;
    try {
      refit = fit_subset(m, fit_set.inliers);
    } catch (const DegeneracyError&) {
      return;
    }
    Support s = score(refit, k, m, threshold);
    if (!better(s, support)) continue;
    keep_cheiral(refit, s, m);
    if (!better(s, support)) continue;
    support = std::move(s);
    model = refit;
  }
}

std::size_t required_iterations(double inlier_ratio, double confidence, int cap) {
  if (inlier_ratio <= 0.0) return static_cast<std::size_t>(cap);
  const double p_good = std::pow(inlier_ratio, static_cast<double>(kSampleSize));
  if (p_good >= 1.0) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n > cap) return static_cast<std::size_t>(cap);
  return static_cast<std::size_t>(std::ceil(std::max(n, 1.0)));
}

}  // namespace

RelativePoseEstimate RelativePoseEstimate::inverted() const {
  RelativePoseEstimate out = *this;
  out.rotation = rotation.transpose();
  out.direction = -(rotation.transpose() * direction);
  out.direction_of_transform = direction_of_transform == TransformDirection::query_to_rendered
                                   ? TransformDirection::rendered_to_query
                                   : TransformDirection::query_to_rendered;
  return out;
}

void RansacConfig::validate() const {
  if (max_iterations < 1) throw PreconditionError("ransac: max_iterations must be >= 1");
  if (!(inlier_threshold_px > 0.0)) throw PreconditionError("ransac: inlier threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw PreconditionError("ransac: confidence must be in (0, 1)");
  if (min_matches < kSampleSize) throw PreconditionError("ransac: min_matches must be >= 8");
}

Eigen::Matrix3d eight_point(std::span<const Eigen::Vector2d> query, std::span<const Eigen::Vector2d> view) {
  if (query.size() != view.size()) throw PreconditionError("eight_point: point lists differ in length");
  const std::size_t n = query.size();
  if (n < kSampleSize) throw InsufficientDataError("eight_point: need at least 8 correspondences");

  const Eigen::Matrix3d tq = hartley_transform(query);
  const Eigen::Matrix3d tv = hartley_transform(view);
  Eigen::Matrix<double, Eigen::Dynamic, 9> a(static_cast<Eigen::Index>(n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = tq * lift(query[i]);
    const Eigen::Vector3d q = tv * lift(view[i]);
    a.row(static_cast<Eigen::Index>(i)) << q.x() * p.x(), q.x() * p.y(), q.x(), q.y() * p.x(), q.y() * p.y(), q.y(),
        p.x(), p.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 8 || !(sv(7) > kRankTolerance * sv(0))) {
    throw DegeneracyError("eight_point: degenerate configuration (design matrix rank < 8)");
  }
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d e_conditioned;
  e_conditioned << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  return project_to_essential(tv.transpose() * enforce_rank_two(e_conditioned) * tq);
}

RelativePoseEstimate decompose_essential(const Eigen::Matrix3d& essential, std::span<const Eigen::Vector2d> query,
                                         std::span<const Eigen::Vector2d> view) {
  if (query.empty() || query.size() != view.size()) {
    throw PreconditionError("decompose_essential: need at least one match");
  }
  std::size_t best_count = 0;
  std::size_t best_index = 0;
  const auto candidates = factorizations(essential);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      if (in_front_of_both(candidates[c].rotation, candidates[c].direction, lift(query[i]), lift(view[i]))) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_index = c;
    }
  }
  if (2 * best_count <= query.size()) {
    throw CheiralityError("decompose_essential: no factorization puts a majority of points in front of both cameras");
  }
  RelativePoseEstimate est;
  est.rotation = candidates[best_index].rotation;
  est.direction = candidates[best_index].direction;
  est.direction_of_transform = TransformDirection::query_to_rendered;
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (in_front_of_both(est.rotation, est.direction, lift(query[i]), lift(view[i]))) est.inliers.push_back(i);
  }
  return est;
}

RelativePoseEstimate decompose_essential(const Eigen::Matrix3d& essential, const CorrespondenceSet& matches,
                                         const Intrinsics& k) {
  const NormalizedMatches m = normalize_matches(matches, k);
  return decompose_essential(essential, m.query, m.view);
}

double symmetric_epipolar_distance(const Eigen::Matrix3d& essential, const Intrinsics& k,
                                   const Eigen::Vector3d& query_normalized, const Eigen::Vector3d& view_normalized) {
  const double in_view = line_distance_px(essential * query_normalized, k, view_normalized);
  const double in_query = line_distance_px(essential.transpose() * view_normalized, k, query_normalized);
  return 0.5 * (in_view + in_query);
}

RelativePoseEstimate estimate_relative_pose(const CorrespondenceSet& matches, const Intrinsics& k,
                                            const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t n = matches.size();
  if (n < cfg.min_matches) {
    throw InsufficientDataError("estimate_relative_pose: " + std::to_string(n) + " matches, need " +
                                std::to_string(cfg.min_matches));
  }
  const NormalizedMatches m = normalize_matches(matches, k);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);

  Support best;
  Eigen::Matrix3d best_model = Eigen::Matrix3d::Zero();
  std::size_t budget = static_cast<std::size_t>(cfg.max_iterations);
  std::vector<Eigen::Vector2d> sq(kSampleSize), sv(kSampleSize);
  for (std::size_t iter = 0; iter < budget; ++iter) {
    // Partial Fisher-Yates: the first 8 slots of pool become the sample.
    for (std::size_t j = 0; j < kSampleSize; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, n - 1);
      std::swap(pool[j], pool[pick(rng)]);
      sq[j] = m.query[pool[j]];
      sv[j] = m.view[pool[j]];
    }
    Eigen::Matrix3d model;
    try {
      model = eight_point(sq, sv);
    } catch (const DegeneracyError&) {
      continue;
    }
    Support s = score(model, k, m, cfg.inlier_threshold_px);
    // Cheirality only removes support, so the raw count is a cheap upper bound.
    if (!better(s, best)) continue;
    keep_cheiral(model, s, m);
    if (better(s, best)) {
      polish(model, s, k, m, cfg.inlier_threshold_px);
      best = std::move(s);
      best_model = model;
      budget = std::min<std::size_t>(
          budget, required_iterations(static_cast<double>(best.inliers.size()) / static_cast<double>(n),
                                      cfg.confidence, cfg.max_iterations));
    }
  }
  if (best.inliers.size() < cfg.min_matches) {
    throw RobustFailureError("estimate_relative_pose: best model has " + std::to_string(best.inliers.size()) +
                             " inliers, need " + std::to_string(cfg.min_matches));
  }

  std::vector<Eigen::Vector2d> iq, iv;
  iq.reserve(best.inliers.size());
  iv.reserve(best.inliers.size());
  for (std::size_t i : best.inliers) {
    iq.push_back(m.query[i]);
    iv.push_back(m.view[i]);
  }
  RelativePoseEstimate est = decompose_essential(best_model, iq, iv);
  for (std::size_t& j : est.inliers) j = best.inliers[j];
  if (est.inliers.size() < cfg.min_matches) {
    throw RobustFailureError("estimate_relative_pose: too few inliers survive the cheirality check");
  }
  return est;
}

Eigen::Vector3d epipolar_line(const Intrinsics& k, const Rotation& r_sq, const Vec3& t_sq, const PixelPoint& u_i) {
  if (!(t_sq.norm() > 1e-12)) throw DegeneracyError("epipolar_line: translation too small to define epipolar lines");
  const Eigen::Matrix3d k_inv = k.inverse_matrix();
  return k_inv.transpose() * (hat(t_sq) * r_sq * (k_inv * u_i.homogeneous()));
}

double epipolar_distance(const PixelPoint& u_j, const Eigen::Vector3d& line) {
  const double norm = std::hypot(line.x(), line.y());
  if (norm == 0.0) throw DegeneracyError("epipolar_distance: line has zero normal");
  return u_j.homogeneous().dot(line) / norm;
}

}  // namespace mvrefine
