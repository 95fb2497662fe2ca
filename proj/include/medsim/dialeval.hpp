#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/orchestrator.hpp"
#include "medsim/profile.hpp"

namespace medsim {

// Items recovered from a dialogue, over the 19 grouped items. Absent values
// are stored as nullopt.
struct DerivedProfile {
  std::string profile_id;
  std::string session_id;
  std::map<ItemKey, Field> values;

  Field get(ItemKey key) const;
};

// The items every coverage group draws from, in group order.
const std::vector<ItemKey>& coverage_items();

nlohmann::json derived_to_json(const DerivedProfile& d);
DerivedProfile derived_from_json(const nlohmann::json& j);
// Maps a normalized extraction answer onto the item keys.
DerivedProfile derived_from_extraction(const nlohmann::json& record, std::string profile_id, std::string session_id);

DerivedProfile extract_profile(const Transcript& t, JudgeClient& judge);

struct ItemScore {
  int score = 0;
  std::string reason;
};

// Scores every key of `derived` against the same key of `original` in one
// judge call. A key missing from the answer raises JudgeFormatError.
std::map<std::string, ItemScore> score_items(const std::map<std::string, std::string>& original,
                                             const std::map<std::string, std::string>& derived, JudgeClient& judge);
ItemScore score_item(const std::string& original, const std::string& derived, JudgeClient& judge);

// O = items present in both the original and the derived profile.
std::vector<ItemKey> overlap_items(const PatientProfile& original, const DerivedProfile& derived);
// Scores the overlap of one dialogue.
std::map<ItemKey, ItemScore> score_overlap(const PatientProfile& original, const DerivedProfile& derived,
                                           JudgeClient& judge);

struct GroupCoverage {
  int k = 0;
  int n_dialogues = 0;
  int n_icon_dialogues = 0;  // dialogues with a non-empty overlap
  double icov = 0.0;
  std::optional<double> icon;
  std::optional<double> weighted_icon;
};

struct DialogueCoverage {
  std::string profile_id;
  std::map<ItemKey, int> scores;  // keyed by the overlap set
};

struct CoverageReport {
  std::map<ItemGroup, GroupCoverage> groups;
  GroupCoverage overall;
  std::vector<DialogueCoverage> dialogues;
};

// Coverage over one group of items. Each dialogue's scores hold its overlap
// set; items outside `items` are ignored.
GroupCoverage coverage_over(const std::vector<DialogueCoverage>& dialogues, const std::vector<ItemKey>& items);

// Lists are aligned by position and must agree on profile_id; `scores[i]`
// must hold a score for every overlapping item of dialogue i.
CoverageReport compute_coverage(const std::vector<PatientProfile>& originals,
                                const std::vector<DerivedProfile>& deriveds,
                                const std::vector<std::map<ItemKey, int>>& scores);

inline double weighted_icon(double icov, double icon) { return icov * icon; }

ValidationResult validate_coverage(const CoverageReport& r);
nlohmann::json coverage_to_json(const CoverageReport& r);

}  // namespace medsim
