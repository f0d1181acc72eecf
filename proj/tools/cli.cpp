#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "mvrefine/error.hpp"
#include "mvrefine/text.hpp"

namespace mvrefine::cli {
namespace {

constexpr std::uint64_t kMatcherSalt = 0x6d61746368ULL;
constexpr std::uint64_t kGroundTruthSalt = 0x6774ULL;
constexpr std::uint64_t kInitialSalt = 0x696e6974ULL;

struct SharedFlags {
  std::string config;
  std::string profile = "sevenscenes";
  std::uint64_t seed = 1;
  std::string out;
};

struct Settings {
  RefinementConfig refinement;
  NoiseSpec noise{0.5, 0.1, 0.0, 0};
};

void add_shared(CLI::App* sub, SharedFlags& flags) {
  sub->add_option("--config", flags.config, "INI file overriding profile fields");
  sub->add_option("--profile", flags.profile, "sevenscenes | cambridge | custom")
      ->check(CLI::IsMember({"sevenscenes", "cambridge", "custom"}));
  sub->add_option("--seed", flags.seed, "master seed");
  sub->add_option("--out", flags.out, "output directory")->required();
}

Settings load_settings(const SharedFlags& flags) {
  Settings s;
  s.refinement = profile(flags.profile);
  if (!flags.config.empty()) apply_config(text::read_file(flags.config), s.refinement, &s.noise);
  s.refinement.validate();
  s.noise.validate();
  return s;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

std::vector<BenchmarkQuery> synthetic_queries(const Dataset& data, const NoiseSpec& noise, std::uint64_t seed,
                                              std::vector<std::unique_ptr<SyntheticMatcher>>& matchers) {
  std::vector<BenchmarkQuery> queries;
  for (std::size_t i = 0; i < data.ground_truth.size(); ++i) {
    NoiseSpec n = noise;
    n.seed = matcher_seed(seed, i);
    matchers.push_back(std::make_unique<SyntheticMatcher>(data.scene, data.ground_truth[i], n));
    queries.push_back({query_id(i), data.initial[i], data.ground_truth[i], matchers.back().get(),
                       refinement_seed(seed, i)});
  }
  return queries;
}

std::vector<QueryPose> ground_truths(const std::vector<BenchmarkQuery>& queries) {
  std::vector<QueryPose> out;
  for (const auto& q : queries) out.push_back({q.id, q.ground_truth});
  return out;
}

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

int cmd_synth_gen(const SharedFlags& flags, DatasetSpec spec, const std::vector<double>& box_min,
                  const std::vector<double>& box_max, std::ostream& out) {
  if (!box_min.empty()) spec.box.min = Vec3(box_min[0], box_min[1], box_min[2]);
  if (!box_max.empty()) spec.box.max = Vec3(box_max[0], box_max[1], box_max[2]);
  const Dataset data = make_dataset(spec, flags.seed);
  save_dataset(flags.out, data);
  out << "wrote " << data.scene.points.size() << " points and " << data.ground_truth.size() << " queries to "
      << flags.out << '\n';
  return kExitOk;
}

struct RefineFlags {
  std::string data;
  std::size_t query = 0;
  std::string matches;
  std::string intrinsics;
  std::string view_poses;
  std::string init;
  std::string gt;
};

int cmd_refine(const SharedFlags& flags, const RefineFlags& rf, std::ostream& out, std::ostream& err) {
  const Settings settings = load_settings(flags);
  const bool external = !rf.matches.empty();
  if (external == !rf.data.empty()) {
    throw CLI::ValidationError("refine", "give either --data (synthetic) or --matches (external)");
  }

  QueryTrace result;
  QueryPose truth;
  if (!external) {
    const Dataset data = load_dataset(rf.data);
    if (rf.query >= data.ground_truth.size()) {
      throw CLI::ValidationError("--query", "index " + std::to_string(rf.query) + " out of range");
    }
    NoiseSpec noise = settings.noise;
    noise.seed = matcher_seed(flags.seed, rf.query);
    const SyntheticMatcher matcher(data.scene, data.ground_truth[rf.query], noise);
    const SyntheticViewProvider provider(data.scene.intrinsics);
    result = {query_id(rf.query), refine({query_id(rf.query), data.scene.intrinsics}, data.initial[rf.query],
                                         provider, matcher, settings.refinement,
                                         refinement_seed(flags.seed, rf.query))};
    truth = {result.query_id, data.ground_truth[rf.query]};
  } else {
    if (rf.intrinsics.empty() || rf.view_poses.empty() || rf.init.empty()) {
      throw CLI::ValidationError("refine", "external mode needs --intrinsics, --view-poses and --init");
    }
    const auto sets = load_matches(rf.matches);
    const Intrinsics k = load_intrinsics(rf.intrinsics);
    const auto poses = load_view_poses(rf.view_poses);
    const auto init = load_poses(rf.init);
    if (init.size() != 1) throw ParseError("initial pose file must hold exactly one pose", 0);

    std::vector<ViewRequest> views;
    for (const auto& [id, pose] : poses) {
      const ViewRole role = id == "ref" ? ViewRole::reference : ViewRole::candidate;
      views.push_back({{id, pose, k}, role});
    }
    std::stable_partition(views.begin(), views.end(), [](const ViewRequest& v) { return v.role == ViewRole::reference; });
    for (const auto& set : sets) {
      const bool known = std::any_of(poses.begin(), poses.end(), [&](const auto& p) { return p.first == set.view_id; });
      if (!known) err << "warning: matches for view '" << set.view_id << "' have no pose and are ignored\n";
    }

    const RecordedMatcher matcher(sets);
    IterationRecord rec = refine_views({"q0000", k}, init.front(), views, matcher, settings.refinement,
                                       refinement_seed(flags.seed, 0));
    RefinementTrace trace;
    trace.initial_pose = init.front();
    trace.final_pose = rec.pose_after;
    trace.status = rec.failed ? RefinementStatus::failed_all_views : RefinementStatus::max_iterations;
    trace.records.push_back(std::move(rec));
    result = {"q0000", std::move(trace)};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Pose unknown{Rotation::Constant(nan), Vec3::Constant(nan)};
    if (!rf.gt.empty()) {
      const auto gt = load_poses(rf.gt);
      if (gt.size() != 1) throw ParseError("ground-truth pose file must hold exactly one pose", 0);
      unknown = gt.front();
    }
    truth = {"q0000", unknown};
  }

  for (const auto& rec : result.trace.records) {
    for (const auto& d : rec.views_dropped) {
      err << "iteration " << rec.index + 1 << ": dropped view " << d.view_id << ": " << d.reason << '\n';
    }
  }
  const std::filesystem::path dir(flags.out);
  write_report(std::span<const QueryTrace>(&result, 1), std::span<const QueryPose>(&truth, 1), dir);
  save_poses(dir / "final_pose.txt", {result.trace.final_pose});
  out << "status " << to_string(result.trace.status) << " after " << result.trace.records.size() << " iterations\n";
  return result.trace.status == RefinementStatus::failed_all_views ? kExitRefinementFailed : kExitOk;
}

int cmd_benchmark(const SharedFlags& flags, const std::string& data_dir, unsigned threads, std::ostream& out) {
  const Settings settings = load_settings(flags);
  const Dataset data = load_dataset(data_dir);
  std::vector<std::unique_ptr<SyntheticMatcher>> matchers;
  const auto queries = synthetic_queries(data, settings.noise, flags.seed, matchers);
  const auto traces = run_queries(queries, data.scene.intrinsics, settings.refinement, threads);
  const auto truths = ground_truths(queries);
  write_report(traces, truths, flags.out);
  out << format_summary(traces, truths);
  return kExitOk;
}

int cmd_ablate(const SharedFlags& flags, const std::string& data_dir, unsigned threads, std::ostream& out) {
  const Settings settings = load_settings(flags);
  const Dataset data = load_dataset(data_dir);
  std::vector<std::unique_ptr<SyntheticMatcher>> matchers;
  const auto queries = synthetic_queries(data, settings.noise, flags.seed, matchers);
  const auto truths = ground_truths(queries);

  struct Variant {
    std::string name;
    bool multiview;
    bool egc;
  };
  const std::vector<Variant> variants = {{"full", true, true}, {"no_multiview", false, true}, {"no_egc", true, false}};
  std::string summary = "variant,seed,n,median_e_t_m,median_e_r_deg,failures\n";
  std::string per_query = "query,variant,seed,e_t_m,e_r_deg\n";
  const std::string seed = std::to_string(flags.seed);
  for (const auto& v : variants) {
    RefinementConfig cfg = settings.refinement;
    cfg.enable_multiview = v.multiview;
    cfg.enable_egc = v.egc;
    const auto traces = run_queries(queries, data.scene.intrinsics, cfg, threads);
    // format_summary yields a header and one row "n,med_t,med_r,failures".
    const std::string s = format_summary(traces, truths);
    summary += v.name + ',' + seed + ',' + s.substr(s.find('\n') + 1);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const PoseError e = pose_error(traces[i].trace.final_pose, queries[i].ground_truth);
      per_query += traces[i].query_id + ',' + v.name + ',' + seed + ',' + text::format_double(e.translation_m) +
                   ',' + text::format_double(e.rotation_deg) + '\n';
    }
  }
  const std::filesystem::path dir(flags.out);
  std::filesystem::create_directories(dir);
  text::write_file((dir / "ablation.csv").string(), summary);
  text::write_file((dir / "ablation_queries.csv").string(), per_query);
  out << summary;
  return kExitOk;
}

}  // namespace

std::string query_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%04zu", index);
  return buf;
}

std::uint64_t matcher_seed(std::uint64_t seed, std::size_t index) { return mix_seed(mix_seed(seed, kMatcherSalt), index); }

std::uint64_t refinement_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, index); }

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.queries < 1) throw PreconditionError("synth-gen: need at least one query");
  if (!(spec.init_t >= 0.0) || !(spec.init_r_deg >= 0.0 && spec.init_r_deg < 180.0)) {
    throw PreconditionError("synth-gen: initial error must be non-negative (rotation below 180 degrees)");
  }
  Dataset data;
  data.scene = generate_scene(spec.points, spec.box, spec.intrinsics, seed);

  // Query cameras sit near the origin looking down +z, towards the default box.
  std::mt19937_64 gt_rng(mix_seed(seed, kGroundTruthSalt));
  std::mt19937_64 init_rng(mix_seed(seed, kInitialSalt));
  std::normal_distribution<double> g(0.0, 1.0);
  const double init_r = spec.init_r_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 0; i < spec.queries; ++i) {
    const Rotation r = so3_exp(0.03 * Vec3(g(gt_rng), g(gt_rng), g(gt_rng)));
    const Vec3 center = 0.05 * Vec3(g(gt_rng), g(gt_rng), g(gt_rng));
    const Pose gt{r, -(r * center)};
    const Vec3 dir = random_unit(init_rng);
    const Vec3 axis = random_unit(init_rng);
    data.ground_truth.push_back(gt);
    data.initial.push_back({so3_exp(init_r * axis) * gt.rotation, gt.translation + spec.init_t * dir});
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  save_scene(dir / "scene.txt", data.scene);
  save_poses(dir / "ground_truth.txt", data.ground_truth);
  save_poses(dir / "initial.txt", data.initial);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  data.scene = load_scene(dir / "scene.txt");
  data.ground_truth = load_poses(dir / "ground_truth.txt");
  data.initial = load_poses(dir / "initial.txt");
  if (data.ground_truth.size() != data.initial.size()) {
    throw ParseError("dataset: ground_truth.txt and initial.txt differ in length", 0);
  }
  return data;
}

std::vector<QueryTrace> run_queries(const std::vector<BenchmarkQuery>& queries, const Intrinsics& k,
                                    const RefinementConfig& cfg, unsigned threads) {
  std::vector<QueryTrace> results(queries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const SyntheticViewProvider provider(k);
  auto worker = [&] {
    for (std::size_t i = next++; i < queries.size(); i = next++) {
      try {
        const auto& q = queries[i];
        results[i] = {q.id, refine({q.id, k}, q.initial, provider, *q.matcher, cfg, q.seed)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < std::max(1u, threads); ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

RecordedMatcher::RecordedMatcher(const std::vector<CorrespondenceSet>& sets) {
  for (const auto& s : sets) sets_[s.view_id] = s;
}

CorrespondenceSet RecordedMatcher::match(const QueryView&, const RenderedView& view) const {
  const auto it = sets_.find(view.view_id);
  if (it == sets_.end()) return {view.view_id, {}};
  return it->second;
}

std::vector<std::pair<std::string, Pose>> load_view_poses(const std::filesystem::path& path) {
  std::istringstream in(text::read_file(path.string()));
  std::vector<std::pair<std::string, Pose>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const std::size_t split = trimmed.find_first_of(" \t");
    if (split == std::string_view::npos) throw ParseError("view pose needs an id and 7 fields", number);
    std::string id(trimmed.substr(0, split));
    if (!is_valid_view_id(id)) throw ParseError("invalid view id '" + id + "'", number);
    for (const auto& [seen, pose] : out) {
      if (seen == id) throw ParseError("duplicate view id '" + id + "'", number);
    }
    out.emplace_back(std::move(id), parse_pose(trimmed.substr(split + 1), number));
  }
  if (out.empty()) throw ParseError("no view poses in " + path.string(), 0);
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative multi-view camera pose refinement"};
  app.require_subcommand(1);
  app.name("mvrefine");

  SharedFlags flags;
  DatasetSpec spec;
  std::vector<double> box_min, box_max;
  auto* gen = app.add_subcommand("synth-gen", "generate a synthetic scene with true and initial query poses");
  add_shared(gen, flags);
  gen->add_option("--points", spec.points, "scene points");
  gen->add_option("--queries", spec.queries, "query count");
  gen->add_option("--init-t", spec.init_t, "initial translation error, meters");
  gen->add_option("--init-r-deg", spec.init_r_deg, "initial rotation error, degrees");
  gen->add_option("--box-min", box_min, "scene box corner x y z")->expected(3);
  gen->add_option("--box-max", box_max, "scene box corner x y z")->expected(3);
  gen->add_option("--focal", spec.intrinsics.fx, "focal length, pixels")->each([&](const std::string&) {
    spec.intrinsics.fy = spec.intrinsics.fx;
  });
  gen->add_option("--width", spec.intrinsics.width, "image width");
  gen->add_option("--height", spec.intrinsics.height, "image height");

  RefineFlags rf;
  auto* ref = app.add_subcommand("refine", "refine one query");
  add_shared(ref, flags);
  ref->add_option("--data", rf.data, "synthetic dataset directory");
  ref->add_option("--query", rf.query, "query index in the dataset");
  ref->add_option("--matches", rf.matches, "external matches (JSON Lines)");
  ref->add_option("--intrinsics", rf.intrinsics, "intrinsics record file");
  ref->add_option("--view-poses", rf.view_poses, "rendered view poses, 'id qw qx qy qz tx ty tz'");
  ref->add_option("--init", rf.init, "initial pose file");
  ref->add_option("--gt", rf.gt, "ground-truth pose file");

  std::string data_dir;
  unsigned threads = default_threads();
  auto* bench = app.add_subcommand("benchmark", "refine every query of a dataset and report medians");
  add_shared(bench, flags);
  bench->add_option("--data", data_dir, "synthetic dataset directory")->required();
  bench->add_option("--threads", threads, "worker threads");

  auto* abl = app.add_subcommand("ablate", "compare the full method with its two ablations");
  add_shared(abl, flags);
  abl->add_option("--data", data_dir, "synthetic dataset directory")->required();
  abl->add_option("--threads", threads, "worker threads");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (gen->parsed()) {
      // Principal point at the image centre.
      spec.intrinsics.cx = 0.5 * spec.intrinsics.width;
      spec.intrinsics.cy = 0.5 * spec.intrinsics.height;
      return cmd_synth_gen(flags, spec, box_min, box_max, out);
    }
    if (ref->parsed()) return cmd_refine(flags, rf, out, err);
    if (bench->parsed()) return cmd_benchmark(flags, data_dir, threads, out);
    return cmd_ablate(flags, data_dir, threads, out);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace mvrefine::cli
