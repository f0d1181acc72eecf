#include "mvrefine/camera.hpp"

#include <cmath>
#include <sstream>

#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine {

void Intrinsics::validate() const {
  if (!(std::isfinite(fx) && fx > 0.0 && std::isfinite(fy) && fy > 0.0)) {
    throw PreconditionError("intrinsics: focal lengths must be positive");
  }
  if (!(std::isfinite(cx) && std::isfinite(cy))) throw PreconditionError("intrinsics: principal point must be finite");
  if (width <= 0 || height <= 0) throw PreconditionError("intrinsics: image size must be positive");
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix3d Intrinsics::inverse_matrix() const {
  Eigen::Matrix3d k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

Eigen::Vector3d normalize(const Intrinsics& k, const PixelPoint& p) {
  return {(p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0};
}

PixelPoint denormalize(const Intrinsics& k, const Eigen::Vector3d& x) {
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

std::optional<PixelPoint> project(const Intrinsics& k, const Pose& pose, const Eigen::Vector3d& point) {
  const Eigen::Vector3d x = pose * point;
  if (x.z() <= kMinDepth) return std::nullopt;
  return denormalize(k, x);
}

Intrinsics parse_intrinsics(std::string_view line, std::size_t line_number) {
  const auto fields = text::split_fields(line);
  if (fields.size() != 6) {
    throw ParseError("intrinsics record needs 6 fields (fx fy cx cy width height)", line_number);
  }
  Intrinsics k;
  k.fx = text::parse_double(fields[0], line_number);
  k.fy = text::parse_double(fields[1], line_number);
  k.cx = text::parse_double(fields[2], line_number);
  k.cy = text::parse_double(fields[3], line_number);
  const double w = text::parse_double(fields[4], line_number);
  const double h = text::parse_double(fields[5], line_number);
  if (w != std::floor(w) || h != std::floor(h)) throw ParseError("image size must be integral", line_number);
  k.width = static_cast<int>(w);
  k.height = static_cast<int>(h);
  try {
    k.validate();
  } catch (const PreconditionError& e) {
    throw ParseError(e.what(), line_number);
  }
  return k;
}

std::string format_intrinsics(const Intrinsics& k) {
  return text::format_double(k.fx) + ' ' + text::format_double(k.fy) + ' ' + text::format_double(k.cx) + ' ' +
         text::format_double(k.cy) + ' ' + std::to_string(k.width) + ' ' + std::to_string(k.height);
}

Intrinsics load_intrinsics(const std::filesystem::path& path) {
  std::istringstream in(text::read_file(path.string()));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    return parse_intrinsics(trimmed, number);
  }
  throw ParseError("intrinsics file '" + path.string() + "' is empty", 0);
}

}  // namespace mvrefine
