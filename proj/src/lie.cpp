#include "mvrefine/lie.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine {
namespace {

constexpr double kSmallAngle = 1e-6;
constexpr double kNearPi = 1e-3;
constexpr double kQuaternionNormTol = 1e-6;

Vec3 vee(const Eigen::Matrix3d& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

Eigen::Matrix3d hat(const Vec3& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Rotation so3_exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d phi_hat = hat(phi);
  double a, b;  // sin(t)/t, (1 - cos(t))/t^2
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Rotation::Identity() + a * phi_hat + b * phi_hat * phi_hat;
}

Vec3 so3_log(const Rotation& rotation) {
  const Vec3 v = vee(rotation);  // 2 sin(theta) a
  const double sin_theta = 0.5 * v.norm();
  const double cos_theta = std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < kSmallAngle) {
    // theta / (2 sin theta) = 1/2 + theta^2 / 12 + ...
    return (0.5 + theta * theta / 12.0) * v;
  }
  if (std::numbers::pi - theta < kNearPi) {
    // Symmetric part is cos(t) I + (1 - cos(t)) a a^T; read the axis off its
    // dominant column and take the sign from the skew part.
    const Eigen::Matrix3d sym = 0.5 * (rotation + rotation.transpose());
    const Eigen::Matrix3d aat = (sym - cos_theta * Eigen::Matrix3d::Identity()) / (1.0 - cos_theta);
    Eigen::Index k = 0;
    aat.diagonal().maxCoeff(&k);
    Vec3 axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 1e-300));
    axis.normalize();
    if (axis.dot(v) < 0.0) axis = -axis;
    return theta * axis;
  }
  return (theta / (2.0 * sin_theta)) * v;
}

Eigen::Matrix3d left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    const Eigen::Matrix3d phi_hat = hat(phi);
    return Eigen::Matrix3d::Identity() + 0.5 * phi_hat + (1.0 / 6.0) * phi_hat * phi_hat;
  }
  const Vec3 a = phi / theta;
  const double s = std::sin(theta) / theta;
  return s * Eigen::Matrix3d::Identity() + (1.0 - s) * a * a.transpose() +
         ((1.0 - std::cos(theta)) / theta) * hat(a);
}

Eigen::Matrix3d left_jacobian_inverse(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    const Eigen::Matrix3d phi_hat = hat(phi);
    return Eigen::Matrix3d::Identity() - 0.5 * phi_hat + (1.0 / 12.0) * phi_hat * phi_hat;
  }
  const Vec3 a = phi / theta;
  const double half = 0.5 * theta;
  const double c = half / std::tan(half);
  return c * Eigen::Matrix3d::Identity() + (1.0 - c) * a * a.transpose() - half * hat(a);
}

Pose se3_exp(const Twist& xi) { return {so3_exp(xi.phi), left_jacobian(xi.phi) * xi.rho}; }

Twist se3_log(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation);
  if (phi.norm() >= std::numbers::pi - 1e-6) {
    throw DomainError("se3_log: rotation angle too close to pi for a unique logarithm");
  }
  return {left_jacobian_inverse(phi) * pose.translation, phi};
}

double rotation_angle(const Rotation& a, const Rotation& b) { return so3_log(a.transpose() * b).norm(); }

Rotation project_to_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

bool is_rotation(const Eigen::Matrix3d& m, double tol) {
  if (!m.allFinite()) return false;
  return (m * m.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

Pose parse_pose(std::string_view line, std::size_t line_number) {
  const auto fields = text::split_fields(line);
  if (fields.size() != 7) {
    throw ParseError("pose record needs 7 fields (qw qx qy qz tx ty tz), got " + std::to_string(fields.size()),
                     line_number);
  }
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = text::parse_double(fields[i], line_number);
  Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
  if (std::abs(q.norm() - 1.0) > kQuaternionNormTol) {
    throw ParseError("quaternion is not unit norm (|q| = " + text::format_double(q.norm()) + ")", line_number);
  }
  q.normalize();
  return {q.toRotationMatrix(), Vec3(v[4], v[5], v[6])};
}

std::string format_pose(const Pose& pose) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  std::string out;
  for (double x : {q.w(), q.x(), q.y(), q.z(), pose.translation.x(), pose.translation.y(), pose.translation.z()}) {
    if (!out.empty()) out += ' ';
    out += text::format_double(x);
  }
  return out;
}

std::vector<Pose> load_poses(const std::filesystem::path& path) {
  const std::string contents = text::read_file(path.string());
  std::vector<Pose> poses;
  std::istringstream in(contents);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    poses.push_back(parse_pose(trimmed, number));
  }
  return poses;
}

void save_poses(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  std::string out;
  for (const Pose& p : poses) {
    out += format_pose(p);
    out += '\n';
  }
  text::write_file(path.string(), out);
}

}  // namespace mvrefine
