#pragma once

// Pinhole intrinsics without skew or distortion.

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "mvrefine/lie.hpp"

namespace mvrefine {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;

  Eigen::Vector3d homogeneous() const { return {u, v, 1.0}; }
  bool operator==(const PixelPoint&) const = default;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws PreconditionError unless fx, fy, width, height are positive and finite.
  void validate() const;

  Eigen::Matrix3d matrix() const;
  Eigen::Matrix3d inverse_matrix() const;
  bool contains(const PixelPoint& p) const { return p.u >= 0.0 && p.v >= 0.0 && p.u < width && p.v < height; }
  bool operator==(const Intrinsics&) const = default;
};

/// Points closer than this to the camera plane are treated as behind it.
inline constexpr double kMinDepth = 1e-6;

/// K^-1 (u, v, 1) = ((u - cx) / fx, (v - cy) / fy, 1).
Eigen::Vector3d normalize(const Intrinsics& k, const PixelPoint& p);
PixelPoint denormalize(const Intrinsics& k, const Eigen::Vector3d& x);

/// Pixel of world point X seen from pose T, or nullopt if it is behind the camera.
std::optional<PixelPoint> project(const Intrinsics& k, const Pose& pose, const Eigen::Vector3d& point);

// "fx fy cx cy width height"
Intrinsics parse_intrinsics(std::string_view line, std::size_t line_number = 0);
std::string format_intrinsics(const Intrinsics& k);
Intrinsics load_intrinsics(const std::filesystem::path& path);

}  // namespace mvrefine
