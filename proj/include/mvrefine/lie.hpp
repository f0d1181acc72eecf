#pragma once

// SO(3) / SE(3) machinery used throughout the refinement.
//
// Pose convention (library-wide): a Pose maps world coordinates into the
// camera frame,
//
//     x_cam = R * x_world + t.
//
// Composition a * b applies b first, so for a query camera q and a view s the
// relative transform T_qs = T_q * T_s^-1 takes view-s camera coordinates into
// query camera coordinates and T_q = T_qs * T_s.
//
// Twists are ordered (rho, phi): rho is the translational part, phi = theta * a
// the rotation vector. The group translation is t = J(phi) * rho with J the
// left Jacobian of SO(3).

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mvrefine {

/// 3x3 orthonormal matrix with determinant +1.
using Rotation = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

struct Twist {
  Vec3 rho = Vec3::Zero();
  Vec3 phi = Vec3::Zero();

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << rho, phi;
    return v;
  }
  double norm() const { return vector().norm(); }
};

struct Pose {
  Rotation rotation = Rotation::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Rotation::Identity(), t}; }

  Pose inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }
  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  /// Optical center in world coordinates.
  Vec3 center() const { return -(rotation.transpose() * translation); }
};

Eigen::Matrix3d hat(const Vec3& v);

Rotation so3_exp(const Vec3& phi);

/// Rotation vector with norm in [0, pi]. Handles the angle ~ pi branch explicitly.
Vec3 so3_log(const Rotation& rotation);

/// J = (sin t / t) I + (1 - sin t / t) a a^T + ((1 - cos t) / t) a^. Series below t = 1e-6.
Eigen::Matrix3d left_jacobian(const Vec3& phi);
Eigen::Matrix3d left_jacobian_inverse(const Vec3& phi);

Pose se3_exp(const Twist& xi);

/// Throws DomainError when the rotation angle is at or above pi - 1e-6.
Twist se3_log(const Pose& pose);

/// Geodesic distance in radians.
double rotation_angle(const Rotation& a, const Rotation& b);

/// Nearest rotation in Frobenius norm (SVD projection with det fix).
Rotation project_to_rotation(const Eigen::Matrix3d& m);

bool is_rotation(const Eigen::Matrix3d& m, double tol = 1e-9);

// Text records: "qw qx qy qz tx ty tz", one pose per line.
Pose parse_pose(std::string_view line, std::size_t line_number = 0);
std::string format_pose(const Pose& pose);
std::vector<Pose> load_poses(const std::filesystem::path& path);
void save_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);

}  // namespace mvrefine
