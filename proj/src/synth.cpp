#include "mvrefine/synth.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine {

void SceneBox::validate() const {
  if (!(min.allFinite() && max.allFinite()) || !((max - min).minCoeff() > 0.0)) {
    throw PreconditionError("scene box must have positive extent along every axis");
  }
}

bool SceneBox::contains(const Vec3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

void NoiseSpec::validate() const {
  if (!(pixel_sigma >= 0.0)) throw PreconditionError("noise: pixel_sigma must be >= 0");
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw PreconditionError("noise: outlier_rate must be in [0, 1]");
  if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) throw PreconditionError("noise: dropout_rate must be in [0, 1]");
}

void PerturbationSpec::validate() const {
  if (!(sigma_t >= 0.0) || !(sigma_r_deg >= 0.0)) throw PreconditionError("perturbation: sigmas must be >= 0");
  if (count < 1) throw PreconditionError("perturbation: count must be >= 1");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined state
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_pose(const Pose& pose) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (int i = 0; i < 9; ++i) h = mix_seed(h, std::bit_cast<std::uint64_t>(pose.rotation.data()[i]));
  for (int i = 0; i < 3; ++i) h = mix_seed(h, std::bit_cast<std::uint64_t>(pose.translation[i]));
  return h;
}

SyntheticScene generate_scene(std::size_t n_points, const SceneBox& box, const Intrinsics& k, std::uint64_t seed) {
  if (n_points < 8) throw PreconditionError("generate_scene: need at least 8 points");
  box.validate();
  k.validate();
  SyntheticScene scene;
  scene.intrinsics = k;
  scene.seed = seed;
  scene.points.reserve(n_points);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n_points; ++i) {
    Vec3 p;
    for (int a = 0; a < 3; ++a) p[a] = box.min[a] + unit(rng) * (box.max[a] - box.min[a]);
    scene.points.push_back({i, p});
  }
  return scene;
}

std::vector<Observation> observe(const SyntheticScene& scene, const Pose& pose) {
  std::vector<Observation> out;
  for (const auto& p : scene.points) {
    const auto px = project(scene.intrinsics, pose, p.position);
    if (px && scene.intrinsics.contains(*px)) out.push_back({p.id, *px});
  }
  return out;
}

SyntheticMatches synth_match(const SyntheticScene& scene, const Pose& query_pose, const Pose& view_pose,
                             const NoiseSpec& noise, const std::string& view_id) {
  noise.validate();
  const auto in_query = observe(scene, query_pose);
  const auto in_view = observe(scene, view_pose);
  std::unordered_map<std::size_t, PixelPoint> view_pixel;
  view_pixel.reserve(in_view.size());
  for (const auto& o : in_view) view_pixel.emplace(o.point_id, o.pixel);

  SyntheticMatches out;
  out.set.view_id = view_id;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Intrinsics& k = scene.intrinsics;
  for (const auto& oq : in_query) {
    const auto it = view_pixel.find(oq.point_id);
    if (it == view_pixel.end()) continue;
    // Fixed number of draws per shared point keeps the stream aligned whatever the branches do.
    const double drop = unit(rng);
    const double nq_u = gauss(rng), nq_v = gauss(rng), nv_u = gauss(rng), nv_v = gauss(rng);
    const double outlier = unit(rng);
    const double ou = unit(rng), ov = unit(rng);
    if (drop < noise.dropout_rate) continue;

    MatchRecord r;
    r.query_point = {oq.pixel.u + noise.pixel_sigma * nq_u, oq.pixel.v + noise.pixel_sigma * nq_v};
    r.view_point = {it->second.u + noise.pixel_sigma * nv_u, it->second.v + noise.pixel_sigma * nv_v};
    r.confidence = 1.0;
    const bool is_outlier = outlier < noise.outlier_rate;
    if (is_outlier) r.view_point = {ou * k.width, ov * k.height};
    out.set.records.push_back(r);
    out.point_ids.push_back(oq.point_id);
    out.is_outlier.push_back(is_outlier);
  }
  return out;
}

std::vector<Pose> sample_perturbations(const Pose& base, const PerturbationSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma_r = spec.sigma_r_deg * std::numbers::pi / 180.0;
  std::vector<Pose> out;
  out.reserve(spec.count);
  for (std::size_t l = 0; l < spec.count; ++l) {
    const Vec3 dt(gauss(rng), gauss(rng), gauss(rng));
    Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
    const double angle = std::abs(gauss(rng)) * sigma_r;
    const double axis_norm = axis.norm();
    axis = axis_norm > 0.0 ? Vec3(axis / axis_norm) : Vec3::UnitZ();
    out.push_back({so3_exp(angle * axis) * base.rotation, base.translation + spec.sigma_t * dt});
  }
  return out;
}

std::string format_scene(const SyntheticScene& scene) {
  std::string out = format_intrinsics(scene.intrinsics) + '\n';
  for (const auto& p : scene.points) {
    out += std::to_string(p.id) + ' ' + text::format_double(p.position.x()) + ' ' +
           text::format_double(p.position.y()) + ' ' + text::format_double(p.position.z()) + '\n';
  }
  return out;
}

SyntheticScene parse_scene(std::string_view contents) {
  SyntheticScene scene;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    if (!have_header) {
      scene.intrinsics = parse_intrinsics(trimmed, number);
      have_header = true;
      continue;
    }
    const auto f = text::split_fields(trimmed);
    if (f.size() != 4) throw ParseError("scene point needs 4 fields (id x y z)", number);
    const double id = text::parse_double(f[0], number);
    if (id < 0.0 || id != std::floor(id)) throw ParseError("point id must be a non-negative integer", number);
    scene.points.push_back({static_cast<std::size_t>(id),
                            Vec3(text::parse_double(f[1], number), text::parse_double(f[2], number),
                                 text::parse_double(f[3], number))});
  }
  if (!have_header) throw ParseError("scene file has no intrinsics header", 0);
  if (scene.points.size() < 8) throw ParseError("scene needs at least 8 points", 0);
  return scene;
}

void save_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  text::write_file(path.string(), format_scene(scene));
}

SyntheticScene load_scene(const std::filesystem::path& path) { return parse_scene(text::read_file(path.string())); }

SyntheticMatcher::SyntheticMatcher(SyntheticScene scene, Pose query_pose, NoiseSpec noise)
    : scene_(std::move(scene)), query_pose_(query_pose), noise_(noise) {
  noise_.validate();
}

CorrespondenceSet SyntheticMatcher::match(const QueryView& /*query*/, const RenderedView& view) const {
  NoiseSpec noise = noise_;
  noise.seed = mix_seed(noise_.seed, hash_pose(view.pose));
  return synth_match(scene_, query_pose_, view.pose, noise, view.view_id).set;
}

}  // namespace mvrefine
