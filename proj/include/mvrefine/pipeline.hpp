#pragma once

// Iterative render-match-refine loop. Each step renders a reference view at the
// current estimate plus L perturbed candidates, matches the query against each
// of them, estimates relative poses, fuses them into a coarse absolute pose and
// polishes it against the epipolar constraints of all surviving views.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvrefine/egc.hpp"
#include "mvrefine/epipolar.hpp"
#include "mvrefine/lie.hpp"
#include "mvrefine/matching.hpp"
#include "mvrefine/synth.hpp"

namespace mvrefine {

/// Stand-in for a scene renderer: yields a view at any requested pose.
class ViewProvider {
 public:
  virtual ~ViewProvider() = default;
  virtual RenderedView render(const Pose& pose, const std::string& view_id) const = 0;
};

/// Views of a synthetic scene. Keypoints come from the paired SyntheticMatcher.
class SyntheticViewProvider : public ViewProvider {
 public:
  explicit SyntheticViewProvider(Intrinsics intrinsics) : intrinsics_(intrinsics) {}
  RenderedView render(const Pose& pose, const std::string& view_id) const override {
    return {view_id, pose, intrinsics_};
  }

 private:
  Intrinsics intrinsics_;
};

struct RefinementConfig {
  int iterations = 6;
  PerturbationSpec perturbation{0.04, 0.01, 6, 0};
  RansacConfig ransac;
  LmConfig lm;
  MatcherConfig matcher;
  bool enable_multiview = true;
  bool enable_egc = true;
  double early_stop_twist_norm = 1e-6;
  bool recenter_perturbations = true;
  int max_consecutive_failures = 2;

  void validate() const;
};

/// "sevenscenes", "cambridge" or "custom" (library defaults).
RefinementConfig profile(std::string_view name);

/// INI-style overrides: sections [refinement], [perturbation], [ransac], [lm],
/// [matcher] and, when `noise` is given, [noise]. Unknown sections or keys and
/// malformed values throw ParseError.
void apply_config(std::string_view contents, RefinementConfig& cfg, NoiseSpec* noise = nullptr);

struct DroppedView {
  std::string view_id;
  std::string reason;
};

struct IterationRecord {
  int index = 0;
  Pose pose_before;
  Pose pose_coarse;
  Pose pose_after;
  std::vector<std::pair<std::string, std::size_t>> inlier_counts;  // surviving views
  std::vector<double> scales;                                      // per surviving view, empty without consistency
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::vector<DroppedView> views_dropped;
  bool failed = false;  // every view dropped; the pose did not move
};

enum class RefinementStatus { converged, max_iterations, failed_all_views };
std::string_view to_string(RefinementStatus status);

struct RefinementTrace {
  Pose initial_pose;
  Pose final_pose;
  std::vector<IterationRecord> records;
  RefinementStatus status = RefinementStatus::max_iterations;
};

struct ViewRequest {
  RenderedView view;
  ViewRole role = ViewRole::candidate;
};

/// Match, estimate, fuse and refine against an explicit set of views. The
/// reference, if present, must come first.
IterationRecord refine_views(const QueryView& query, const Pose& estimate, std::span<const ViewRequest> views,
                             const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed);

/// One step from `estimate`. Candidates are sampled around `perturbation_center`
/// (the estimate itself when empty). All randomness derives from `seed`.
IterationRecord refine_once(const QueryView& query, const Pose& estimate, const ViewProvider& provider,
                            const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed,
                            const std::optional<Pose>& perturbation_center = std::nullopt);

RefinementTrace refine(const QueryView& query, const Pose& initial, const ViewProvider& provider,
                       const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed);

}  // namespace mvrefine
