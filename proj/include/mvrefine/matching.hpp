#pragma once

// Correspondence data model and the boundary to external feature matchers.
//
// A matcher (learned or synthetic) produces, for the query image and one
// rendered view, pixel pairs with a matchability confidence in [0, 1]. Only
// pairs with confidence strictly above tau_matching are kept.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mvrefine/camera.hpp"
#include "mvrefine/error.hpp"
#include "mvrefine/lie.hpp"

namespace mvrefine {

struct MatchRecord {
  PixelPoint query_point;
  PixelPoint view_point;
  double confidence = 1.0;

  bool operator==(const MatchRecord&) const = default;
};

/// Matches between the query and one rendered view. View ids are "ref" or "c0".."cN".
struct CorrespondenceSet {
  std::string view_id;
  std::vector<MatchRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  bool operator==(const CorrespondenceSet&) const = default;
};

struct MatcherConfig {
  double tau_detection = 0.005;  // consumed by the external extractor; carried for completeness
  double tau_matching = 0.1;

  void validate() const;
};

bool is_valid_view_id(std::string_view id);

/// Keeps records with confidence > tau_matching, in order.
CorrespondenceSet filter_matches(const CorrespondenceSet& raw, const MatcherConfig& cfg);

/// Drops repeated (query_point, view_point) pairs, keeping the most confident one
/// at the position of the first occurrence.
CorrespondenceSet deduplicate(CorrespondenceSet set);

/// Number of records with a point outside its image.
std::size_t count_out_of_bounds(const CorrespondenceSet& set, const Intrinsics& query, const Intrinsics& view);

// JSON Lines: {"view": "ref", "qu": .., "qv": .., "ru": .., "rv": .., "conf": ..}
std::vector<CorrespondenceSet> parse_matches(std::string_view contents);
std::vector<CorrespondenceSet> load_matches(const std::filesystem::path& path);
std::string serialize_matches(const std::vector<CorrespondenceSet>& sets);
void save_matches(const std::filesystem::path& path, const std::vector<CorrespondenceSet>& sets);

struct QueryView {
  std::string id;
  Intrinsics intrinsics;
};

/// A view produced by a view provider at a requested pose.
struct RenderedView {
  std::string view_id;
  Pose pose;
  Intrinsics intrinsics;
};

class MatchingFailed : public Error {
 public:
  using Error::Error;
};

/// Feature-matching backend. Implementations must be callable concurrently
/// from distinct refinement jobs.
class Matcher {
 public:
  virtual ~Matcher() = default;
  /// Throws MatchingFailed when the backend cannot produce matches.
  virtual CorrespondenceSet match(const QueryView& query, const RenderedView& view) const = 0;
};

}  // namespace mvrefine
