#include "mvrefine/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "mvrefine/consistency.hpp"
#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine {
namespace {

struct Survivor {
  RenderedView view;
  ViewRole role;
  RelativePoseEstimate relative;
  CorrespondenceSet inliers;
};

Pose keep_center(const Rotation& rotation, const Pose& estimate) {
  return {rotation, -(rotation * estimate.center())};
}

Rotation rotation_candidate(const Survivor& s) { return s.relative.inverted().rotation * s.view.pose.rotation; }

// Coarse absolute pose from the surviving views. Views whose recovered scale is
// not positive are removed from `survivors` and recorded as dropped.
Pose fuse(std::vector<Survivor>& survivors, const Pose& estimate, bool multiview, IterationRecord& rec) {
  while (multiview && survivors.size() >= 2) {
    std::vector<ViewObservation> obs;
    obs.reserve(survivors.size());
    for (const auto& s : survivors) obs.push_back({s.view.pose, s.relative, 1.0});
    ConsistencySolution sol;
    try {
      sol = coarse_pose(obs);
    } catch (const ScaleDegeneracyError&) {
      std::vector<Rotation> candidates;
      for (const auto& s : survivors) candidates.push_back(rotation_candidate(s));
      return keep_center(average_rotations(candidates).rotation, estimate);
    }
    std::vector<Survivor> kept;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      if (sol.scales[i] > 0.0) {
        kept.push_back(std::move(survivors[i]));
      } else {
        rec.views_dropped.push_back({survivors[i].view.view_id, "non-positive scale " + text::format_double(sol.scales[i])});
      }
    }
    const bool changed = kept.size() != survivors.size();
    survivors = std::move(kept);
    if (!changed) {
      rec.scales = sol.scales;
      return sol.pose;
    }
  }
  if (survivors.empty()) return estimate;
  // Single view: rotation from its relative estimate, translation scale left to
  // the epipolar refinement, camera center held at the current estimate.
  return keep_center(rotation_candidate(survivors.front()), estimate);
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: " + key + " expects true/false, got '" + std::string(v) + "'", 0);
}

double parse_real(const std::string& key, std::string_view v) {
  try {
    return text::parse_double(text::trim(v), 0);
  } catch (const ParseError&) {
    throw ParseError("config: " + key + " expects a number, got '" + std::string(v) + "'", 0);
  }
}

long long parse_integer(const std::string& key, std::string_view v) {
  const double d = parse_real(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e15) {
    throw ParseError("config: " + key + " expects an integer, got '" + std::string(v) + "'", 0);
  }
  return static_cast<long long>(d);
}

std::size_t parse_count(const std::string& key, std::string_view v) {
  const long long n = parse_integer(key, v);
  if (n < 0) throw ParseError("config: " + key + " must be non-negative", 0);
  return static_cast<std::size_t>(n);
}

}  // namespace

void RefinementConfig::validate() const {
  if (iterations < 1) throw PreconditionError("config: iterations must be >= 1");
  if (!(early_stop_twist_norm >= 0.0)) throw PreconditionError("config: early_stop_twist_norm must be >= 0");
  if (max_consecutive_failures < 1) throw PreconditionError("config: max_consecutive_failures must be >= 1");
  perturbation.validate();
  ransac.validate();
  lm.validate();
  matcher.validate();
}

RefinementConfig profile(std::string_view name) {
  RefinementConfig cfg;
  if (name == "sevenscenes") {
    cfg.iterations = 6;
    cfg.perturbation.sigma_t = 0.04;
    cfg.perturbation.sigma_r_deg = 0.01;
  } else if (name == "cambridge") {
    cfg.iterations = 4;
    cfg.perturbation.sigma_t = 4.0;
    cfg.perturbation.sigma_r_deg = 2.0;
  } else if (name != "custom") {
    throw PreconditionError("unknown profile '" + std::string(name) + "' (sevenscenes, cambridge, custom)");
  }
  return cfg;
}

void apply_config(std::string_view contents, RefinementConfig& cfg, NoiseSpec* noise) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(contents)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError("config: " + e.message(), e.line());
  }

  NoiseSpec unused_noise;
  NoiseSpec& n = noise != nullptr ? *noise : unused_noise;
  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  const auto real = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_real(k, v); };
  };
  const auto integer = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = static_cast<int>(parse_integer(k, v)); };
  };
  const auto count = [](std::size_t& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_count(k, v); };
  };
  const auto flag = [](bool& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
  };
  const std::map<std::string, Setter> setters = {
      {"refinement.iterations", integer(cfg.iterations)},
      {"refinement.enable_multiview", flag(cfg.enable_multiview)},
      {"refinement.enable_egc", flag(cfg.enable_egc)},
      {"refinement.early_stop_twist_norm", real(cfg.early_stop_twist_norm)},
      {"refinement.recenter_perturbations", flag(cfg.recenter_perturbations)},
      {"refinement.max_consecutive_failures", integer(cfg.max_consecutive_failures)},
      {"perturbation.sigma_t", real(cfg.perturbation.sigma_t)},
      {"perturbation.sigma_r_deg", real(cfg.perturbation.sigma_r_deg)},
      {"perturbation.count", count(cfg.perturbation.count)},
      {"ransac.max_iterations", integer(cfg.ransac.max_iterations)},
      {"ransac.inlier_threshold_px", real(cfg.ransac.inlier_threshold_px)},
      {"ransac.confidence", real(cfg.ransac.confidence)},
      {"ransac.min_matches", count(cfg.ransac.min_matches)},
      {"lm.max_iterations", integer(cfg.lm.max_iterations)},
      {"lm.lambda_init", real(cfg.lm.lambda_init)},
      {"lm.lambda_up", real(cfg.lm.lambda_up)},
      {"lm.lambda_down", real(cfg.lm.lambda_down)},
      {"lm.step_tolerance", real(cfg.lm.step_tolerance)},
      {"lm.objective_tolerance", real(cfg.lm.objective_tolerance)},
      {"lm.sigma_floor_px", real(cfg.lm.sigma_floor_px)},
      {"matcher.tau_detection", real(cfg.matcher.tau_detection)},
      {"matcher.tau_matching", real(cfg.matcher.tau_matching)},
      {"noise.pixel_sigma", real(n.pixel_sigma)},
      {"noise.outlier_rate", real(n.outlier_rate)},
      {"noise.dropout_rate", real(n.dropout_rate)},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ParseError("config: key '" + section + "' outside of a section", 0);
    if (section == "noise" && noise == nullptr) throw ParseError("config: [noise] is not accepted here", 0);
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end()) throw ParseError("config: unknown key '" + full + "'", 0);
      it->second(full, value.data());
    }
  }
}

std::string_view to_string(RefinementStatus status) {
  switch (status) {
    case RefinementStatus::converged:
      return "converged";
    case RefinementStatus::max_iterations:
      return "max_iterations";
    case RefinementStatus::failed_all_views:
      return "failed_all_views";
  }
  return "unknown";
}

IterationRecord refine_once(const QueryView& query, const Pose& estimate, const ViewProvider& provider,
                            const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed,
                            const std::optional<Pose>& perturbation_center) {
  cfg.validate();
  std::vector<ViewRequest> views;
  views.push_back({provider.render(estimate, "ref"), ViewRole::reference});
  if (cfg.enable_multiview) {
    PerturbationSpec spec = cfg.perturbation;
    spec.seed = mix_seed(seed, 1);
    const auto poses = sample_perturbations(perturbation_center.value_or(estimate), spec);
    for (std::size_t l = 0; l < poses.size(); ++l) {
      views.push_back({provider.render(poses[l], "c" + std::to_string(l)), ViewRole::candidate});
    }
  }
  return refine_views(query, estimate, views, matcher, cfg, seed);
}

IterationRecord refine_views(const QueryView& query, const Pose& estimate, std::span<const ViewRequest> views,
                             const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  IterationRecord rec;
  rec.pose_before = estimate;
  rec.pose_coarse = estimate;
  rec.pose_after = estimate;

  std::vector<Survivor> survivors;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& [view, role] = views[i];
    CorrespondenceSet set;
    try {
      set = deduplicate(filter_matches(matcher.match(query, view), cfg.matcher));
    } catch (const MatchingFailed& e) {
      rec.views_dropped.push_back({view.view_id, std::string("matching failed: ") + e.what()});
      continue;
    }
    if (set.size() < cfg.ransac.min_matches) {
      rec.views_dropped.push_back({view.view_id, "too few matches (" + std::to_string(set.size()) + ")"});
      continue;
    }
    RansacConfig rc = cfg.ransac;
    rc.seed = mix_seed(seed, 100 + i);
    try {
      RelativePoseEstimate rel = estimate_relative_pose(set, query.intrinsics, rc);
      CorrespondenceSet inliers;
      inliers.view_id = set.view_id;
      for (std::size_t idx : rel.inliers) inliers.records.push_back(set.records[idx]);
      survivors.push_back({view, role, std::move(rel), std::move(inliers)});
    } catch (const Error& e) {
      rec.views_dropped.push_back({view.view_id, std::string("relative pose: ") + e.what()});
    }
  }

  if (survivors.empty()) {
    rec.failed = true;
    return rec;
  }

  rec.pose_coarse = fuse(survivors, estimate, cfg.enable_multiview, rec);
  for (const auto& s : survivors) rec.inlier_counts.emplace_back(s.view.view_id, s.inliers.size());

  EgcProblem problem;
  problem.intrinsics = query.intrinsics;
  for (const auto& s : survivors) problem.views.push_back({s.role, s.view.pose, s.inliers});

  if (cfg.enable_egc) {
    const EgcResult res = refine_lm(rec.pose_coarse, problem, cfg.lm);
    rec.pose_after = res.pose;
    rec.objective_before = res.objective_initial;
    rec.objective_after = res.objective_final;
  } else {
    rec.pose_after = rec.pose_coarse;
    rec.objective_before = objective(rec.pose_coarse, problem, cfg.lm.sigma_floor_px);
    rec.objective_after = rec.objective_before;
  }
  return rec;
}

RefinementTrace refine(const QueryView& query, const Pose& initial, const ViewProvider& provider,
                       const Matcher& matcher, const RefinementConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RefinementTrace trace;
  trace.initial_pose = initial;
  Pose pose = initial;
  int consecutive_failures = 0;
  const std::optional<Pose> center = cfg.recenter_perturbations ? std::nullopt : std::optional<Pose>(initial);
  for (int k = 0; k < cfg.iterations; ++k) {
    IterationRecord rec = refine_once(query, pose, provider, matcher, cfg, mix_seed(seed, k), center);
    rec.index = k;
    if (rec.failed) {
      trace.records.push_back(std::move(rec));
      if (++consecutive_failures >= cfg.max_consecutive_failures) {
        trace.status = RefinementStatus::failed_all_views;
        break;
      }
      continue;
    }
    consecutive_failures = 0;
    double step = std::numeric_limits<double>::infinity();
    try {
      step = se3_log(rec.pose_after * pose.inverse()).norm();
    } catch (const DomainError&) {
      // a half-turn correction is certainly not converged
    }
    pose = rec.pose_after;
    trace.records.push_back(std::move(rec));
    if (step < cfg.early_stop_twist_norm) {
      trace.status = RefinementStatus::converged;
      break;
    }
  }
  trace.final_pose = pose;
  return trace;
}

}  // namespace mvrefine
