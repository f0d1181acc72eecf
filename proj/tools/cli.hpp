#pragma once

// Command-line front end: synth-gen, refine, benchmark, ablate.
// Exit codes: 0 success, 1 refinement failure, 2 usage / parse / I/O error.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mvrefine/metrics.hpp"
#include "mvrefine/pipeline.hpp"
#include "mvrefine/synth.hpp"

namespace mvrefine::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRefinementFailed = 1;
inline constexpr int kExitUsage = 2;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct DatasetSpec {
  std::size_t points = 500;
  std::size_t queries = 20;
  SceneBox box{Vec3(-2.0, -1.5, 2.0), Vec3(2.0, 1.5, 5.0)};  // room-scale, fills the default view
  Intrinsics intrinsics{500.0, 500.0, 320.0, 240.0, 640, 480};
  double init_t = 0.1;      // meters, exact offset of each initial translation
  double init_r_deg = 5.0;  // exact rotation angle between initial and true pose
};

struct Dataset {
  SyntheticScene scene;
  std::vector<Pose> ground_truth;
  std::vector<Pose> initial;
};

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed);
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

std::string query_id(std::size_t index);

/// Noise seed of the synthetic matcher of query `index`. Shared by all
/// variants of a run so that ablations see identical observations.
std::uint64_t matcher_seed(std::uint64_t seed, std::size_t index);
/// Seed of the refinement of query `index`.
std::uint64_t refinement_seed(std::uint64_t seed, std::size_t index);

struct BenchmarkQuery {
  std::string id;
  Pose initial;
  Pose ground_truth;
  const Matcher* matcher = nullptr;
  std::uint64_t seed = 0;
};

/// Refines every query on a pool of `threads` workers. Results are in input order
/// and do not depend on the thread count.
std::vector<QueryTrace> run_queries(const std::vector<BenchmarkQuery>& queries, const Intrinsics& k,
                                    const RefinementConfig& cfg, unsigned threads);

/// Replays recorded correspondence sets by view id.
class RecordedMatcher : public Matcher {
 public:
  explicit RecordedMatcher(const std::vector<CorrespondenceSet>& sets);
  CorrespondenceSet match(const QueryView& query, const RenderedView& view) const override;

 private:
  std::map<std::string, CorrespondenceSet> sets_;
};

/// "view_id qw qx qy qz tx ty tz" per line.
std::vector<std::pair<std::string, Pose>> load_view_poses(const std::filesystem::path& path);

}  // namespace mvrefine::cli
