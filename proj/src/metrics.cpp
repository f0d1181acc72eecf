#include "mvrefine/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine {
namespace {

using Aligned = std::vector<std::pair<const QueryTrace*, const Pose*>>;

Aligned align(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths) {
  std::map<std::string, const Pose*> gt;
  for (const auto& g : ground_truths) {
    if (!gt.emplace(g.query_id, &g.pose).second) throw PreconditionError("report: duplicate ground truth " + g.query_id);
  }
  if (gt.size() != traces.size()) throw PreconditionError("report: trace and ground-truth query ids differ");
  Aligned out;
  for (const auto& t : traces) {
    const auto it = gt.find(t.query_id);
    if (it == gt.end()) throw PreconditionError("report: no ground truth for query " + t.query_id);
    out.emplace_back(&t, it->second);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first->query_id < b.first->query_id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].first->query_id == out[i - 1].first->query_id) {
      throw PreconditionError("report: duplicate trace " + out[i].first->query_id);
    }
  }
  return out;
}

}  // namespace

double translation_error(const Vec3& t_est, const Vec3& t_gt) { return (t_est - t_gt).norm(); }

double rotation_error_deg(const Rotation& r_est, const Rotation& r_gt) {
  // arccos of the clamped cosine, taken through atan2 so that small angles keep full precision
  const Rotation m = r_est.transpose() * r_gt;
  const double c = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)).norm();
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

PoseError pose_error(const Pose& estimate, const Pose& ground_truth) {
  return {translation_error(estimate.translation, ground_truth.translation),
          rotation_error_deg(estimate.rotation, ground_truth.rotation)};
}

double median(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

PoseError aggregate_median(std::span<const PoseError> errors) {
  if (errors.empty()) throw PreconditionError("aggregate_median: empty error list");
  std::vector<double> t, r;
  for (const auto& e : errors) {
    t.push_back(e.translation_m);
    r.push_back(e.rotation_deg);
  }
  return {median(std::move(t)), median(std::move(r))};
}

std::string format_trajectories(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths) {
  std::string out = "query,iter,e_t_m,e_r_deg,objective\n";
  for (const auto& [trace, gt] : align(traces, ground_truths)) {
    for (const auto& rec : trace->trace.records) {
      const PoseError e = pose_error(rec.pose_after, *gt);
      out += trace->query_id + ',' + std::to_string(rec.index + 1) + ',' + text::format_double(e.translation_m) +
             ',' + text::format_double(e.rotation_deg) + ',' +
             (rec.failed ? std::string("nan") : text::format_double(rec.objective_after)) + '\n';
    }
  }
  return out;
}

std::string format_summary(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths) {
  const Aligned rows = align(traces, ground_truths);
  std::vector<PoseError> finals;
  std::size_t failures = 0;
  for (const auto& [trace, gt] : rows) {
    finals.push_back(pose_error(trace->trace.final_pose, *gt));
    if (trace->trace.status == RefinementStatus::failed_all_views) ++failures;
  }
  std::string out = "n,median_e_t_m,median_e_r_deg,failures\n";
  if (finals.empty()) return out + "0,nan,nan,0\n";
  const PoseError m = aggregate_median(finals);
  out += std::to_string(rows.size()) + ',' + text::format_double(m.translation_m) + ',' +
         text::format_double(m.rotation_deg) + ',' + std::to_string(failures) + '\n';
  return out;
}

void write_report(std::span<const QueryTrace> traces, std::span<const QueryPose> ground_truths,
                  const std::filesystem::path& dir) {
  const std::string trajectories = format_trajectories(traces, ground_truths);
  const std::string summary = format_summary(traces, ground_truths);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  text::write_file((dir / "trajectories.csv").string(), trajectories);
  text::write_file((dir / "summary.csv").string(), summary);
}

}  // namespace mvrefine
