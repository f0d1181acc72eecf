#pragma once

// Pose error metrics, medians over query sets, and CSV reports.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mvrefine/lie.hpp"
#include "mvrefine/pipeline.hpp"

namespace mvrefine {

struct PoseError {
  double translation_m = 0.0;
  double rotation_deg = 0.0;

  bool operator==(const PoseError&) const = default;
};

/// ||t_est - t_gt||, meters.
double translation_error(const Vec3& t_est, const Vec3& t_gt);
/// arccos((trace(R_est^T R_gt) - 1) / 2) in degrees, argument clamped to [-1, 1].
double rotation_error_deg(const Rotation& r_est, const Rotation& r_gt);
PoseError pose_error(const Pose& estimate, const Pose& ground_truth);

/// Componentwise median; the midpoint of the two central values for even counts.
/// Throws PreconditionError on an empty list.
PoseError aggregate_median(std::span<const PoseError> errors);
double median(std::vector<double> values);

struct QueryTrace {
  std::string query_id;
  RefinementTrace trace;
};

struct QueryPose {
  std::string query_id;
  Pose pose;
};

// Both throw PreconditionError unless the traces and ground truths carry the
// same query ids. Rows are ordered by query id.
std::string format_trajectories(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths);
std::string format_summary(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths);

/// Writes trajectories.csv and summary.csv into `dir` (created if missing).
void write_report(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths,
                  const std::filesystem::path& dir);

}  // namespace mvrefine
