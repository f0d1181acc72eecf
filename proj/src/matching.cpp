#include "mvrefine/matching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <json.hpp>

#include "mvrefine/text.hpp"

namespace mvrefine {
namespace {

double number_field(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  if (!it->is_number()) throw ParseError(std::string("field '") + key + "' must be a number", line);
  const double value = it->get<double>();
  if (!std::isfinite(value)) throw ParseError(std::string("field '") + key + "' is not finite", line);
  return value;
}

}  // namespace

void MatcherConfig::validate() const {
  if (!(tau_detection >= 0.0 && tau_detection <= 1.0)) throw PreconditionError("tau_detection must be in [0, 1]");
  if (!(tau_matching >= 0.0 && tau_matching <= 1.0)) throw PreconditionError("tau_matching must be in [0, 1]");
}

bool is_valid_view_id(std::string_view id) {
  if (id == "ref") return true;
  if (id.size() < 2 || id.front() != 'c') return false;
  return std::all_of(id.begin() + 1, id.end(), [](char c) { return c >= '0' && c <= '9'; });
}

CorrespondenceSet filter_matches(const CorrespondenceSet& raw, const MatcherConfig& cfg) {
  CorrespondenceSet out{raw.view_id, {}};
  out.records.reserve(raw.records.size());
  std::copy_if(raw.records.begin(), raw.records.end(), std::back_inserter(out.records),
               [&](const MatchRecord& r) { return r.confidence > cfg.tau_matching; });
  return out;
}

CorrespondenceSet deduplicate(CorrespondenceSet set) {
  using Key = std::array<double, 4>;
  std::map<Key, std::size_t> first_seen;
  std::vector<MatchRecord> kept;
  kept.reserve(set.records.size());
  for (const MatchRecord& r : set.records) {
    const Key key{r.query_point.u, r.query_point.v, r.view_point.u, r.view_point.v};
    const auto [it, inserted] = first_seen.emplace(key, kept.size());
    if (inserted) {
      kept.push_back(r);
    } else if (r.confidence > kept[it->second].confidence) {
      kept[it->second].confidence = r.confidence;
    }
  }
  set.records = std::move(kept);
  return set;
}

std::size_t count_out_of_bounds(const CorrespondenceSet& set, const Intrinsics& query, const Intrinsics& view) {
  return static_cast<std::size_t>(std::count_if(set.records.begin(), set.records.end(), [&](const MatchRecord& r) {
    return !query.contains(r.query_point) || !view.contains(r.view_point);
  }));
}

std::vector<CorrespondenceSet> parse_matches(std::string_view contents) {
  std::vector<CorrespondenceSet> sets;
  std::map<std::string, std::size_t> index_of;
  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    std::size_t end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    const std::string_view line = text::trim(contents.substr(pos, end - pos));
    pos = end + 1;
    ++line_number;
    if (line.empty()) continue;

    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
    }
    if (!obj.is_object()) throw ParseError("match record must be a JSON object", line_number);
    for (const auto& item : obj.items()) {
      static const std::array<std::string_view, 6> kKeys{"view", "qu", "qv", "ru", "rv", "conf"};
      if (std::find(kKeys.begin(), kKeys.end(), item.key()) == kKeys.end()) {
        throw ParseError("unknown field '" + item.key() + "'", line_number);
      }
    }
    const auto view = obj.find("view");
    if (view == obj.end() || !view->is_string()) throw ParseError("field 'view' must be a string", line_number);
    const std::string view_id = view->get<std::string>();
    if (!is_valid_view_id(view_id)) throw ParseError("unknown view id '" + view_id + "'", line_number);

    MatchRecord record;
    record.query_point = {number_field(obj, "qu", line_number), number_field(obj, "qv", line_number)};
    record.view_point = {number_field(obj, "ru", line_number), number_field(obj, "rv", line_number)};
    record.confidence = number_field(obj, "conf", line_number);
    if (record.confidence < 0.0 || record.confidence > 1.0) {
      throw ParseError("confidence " + text::format_double(record.confidence) + " outside [0, 1]", line_number);
    }

    const auto [it, inserted] = index_of.emplace(view_id, sets.size());
    if (inserted) sets.push_back({view_id, {}});
    sets[it->second].records.push_back(record);
  }
  for (auto& set : sets) set = deduplicate(std::move(set));
  return sets;
}

std::vector<CorrespondenceSet> load_matches(const std::filesystem::path& path) {
  return parse_matches(text::read_file(path.string()));
}

std::string serialize_matches(const std::vector<CorrespondenceSet>& sets) {
  std::string out;
  for (const auto& set : sets) {
    if (!is_valid_view_id(set.view_id)) throw PreconditionError("cannot serialize view id '" + set.view_id + "'");
    for (const auto& r : set.records) {
      out += "{\"view\": \"" + set.view_id + "\", \"qu\": " + text::format_double(r.query_point.u) +
             ", \"qv\": " + text::format_double(r.query_point.v) + ", \"ru\": " + text::format_double(r.view_point.u) +
             ", \"rv\": " + text::format_double(r.view_point.v) + ", \"conf\": " + text::format_double(r.confidence) +
             "}\n";
    }
  }
  return out;
}

void save_matches(const std::filesystem::path& path, const std::vector<CorrespondenceSet>& sets) {
  text::write_file(path.string(), serialize_matches(sets));
}

}  // namespace mvrefine
