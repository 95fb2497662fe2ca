#include "medsim/dialeval.hpp"

#include <algorithm>
#include <cmath>

#include "medsim/error.hpp"

namespace medsim {

using nlohmann::json;

const std::vector<ItemKey>& coverage_items() {
  static const std::vector<ItemKey> items = [] {
    std::vector<ItemKey> out;
    for (auto g : kItemGroups) {
      for (auto k : group_members(g)) out.push_back(k);
    }
    return out;
  }();
  return items;
}

Field DerivedProfile::get(ItemKey key) const {
  auto it = values.find(key);
  return it == values.end() ? std::nullopt : it->second;
}

json derived_to_json(const DerivedProfile& d) {
  json values = json::object();
  for (auto key : coverage_items()) values[std::string(item_name(key))] = display(d.get(key));
  return {{"profile_id", d.profile_id}, {"session_id", d.session_id}, {"values", values}};
}

namespace {

Field present(const std::string& s) {
  auto t = trim(s);
  if (t.empty() || t == kNotRecorded) return std::nullopt;
  return t;
}

}  // namespace

DerivedProfile derived_from_json(const json& j) {
  try {
    DerivedProfile d;
    d.profile_id = j.at("profile_id").get<std::string>();
    d.session_id = j.at("session_id").get<std::string>();
    const auto& values = j.at("values");
    for (auto key : coverage_items()) d.values[key] = present(values.at(std::string(item_name(key))).get<std::string>());
    return d;
  } catch (const json::exception& e) {
    throw ParseError("derived profile", e.what());
  }
}

DerivedProfile derived_from_extraction(const json& record, std::string profile_id, std::string session_id) {
  DerivedProfile d;
  d.profile_id = std::move(profile_id);
  d.session_id = std::move(session_id);
  const auto& social = record.at("social_history");
  for (auto key : group_members(ItemGroup::social)) d.values[key] = present(social.at(std::string(item_name(key))));
  const auto& pmh = record.at("previous_medical_history");
  for (auto key : group_members(ItemGroup::pmh)) d.values[key] = present(pmh.at(std::string(item_name(key))));
  const auto& visit = record.at("current_visit_information");
  const auto pos = present(visit.at("present_illness").at("positive"));
  const auto neg = present(visit.at("present_illness").at("negative"));
  // Same text form as the original profile's present-illness item.
  if (pos || neg) {
    d.values[ItemKey::present_illness] = "positive: " + display(pos) + "; negative (denied): " + display(neg);
  } else {
    d.values[ItemKey::present_illness] = std::nullopt;
  }
  for (auto key : {ItemKey::chief_complaint, ItemKey::pain, ItemKey::medication, ItemKey::arrival_transport}) {
    d.values[key] = present(visit.at(std::string(item_name(key))));
  }
  return d;
}

DerivedProfile extract_profile(const Transcript& t, JudgeClient& judge) {
  if (!t.complete()) throw PreconditionError("session " + t.session_id + " is not complete");
  auto out = judge.ask(build_judge_prompt(JudgeKind::profile_extract, {{"conversation", render_history(t)}}));
  return derived_from_extraction(out, t.profile_id, t.session_id);
}

std::map<std::string, ItemScore> score_items(const std::map<std::string, std::string>& original,
                                             const std::map<std::string, std::string>& derived, JudgeClient& judge) {
  json gt = json::object();
  json pred = json::object();
  std::vector<std::string> keys;
  for (auto& [key, value] : derived) {
    auto it = original.find(key);
    if (it == original.end()) throw PreconditionError("no original value for '" + key + "'");
    gt[key] = it->second;
    pred[key] = value;
    keys.push_back(key);
  }
  if (keys.empty()) return {};
  auto out = judge.ask(build_judge_prompt(
      JudgeKind::consistency, {{"profile_data", gt.dump()}, {"predict_dict", pred.dump()}, {"keys", join(keys, "\n")}}));
  std::map<std::string, ItemScore> scores;
  for (auto& key : keys) {
    auto it = out.find(key);
    if (it == out.end()) throw JudgeFormatError("consistency answer has no score for '" + key + "'", out.dump());
    scores[key] = {it->at("score").get<int>(), it->at("reason").get<std::string>()};
  }
  return scores;
}

ItemScore score_item(const std::string& original, const std::string& derived, JudgeClient& judge) {
  return score_items({{"item", original}}, {{"item", derived}}, judge).at("item");
}

std::vector<ItemKey> overlap_items(const PatientProfile& original, const DerivedProfile& derived) {
  std::vector<ItemKey> out;
  for (auto key : coverage_items()) {
    if (item_text(original, key) && derived.get(key)) out.push_back(key);
  }
  return out;
}

std::map<ItemKey, ItemScore> score_overlap(const PatientProfile& original, const DerivedProfile& derived,
                                           JudgeClient& judge) {
  std::map<std::string, std::string> gt;
  std::map<std::string, std::string> pred;
  for (auto key : overlap_items(original, derived)) {
    gt[std::string(item_name(key))] = *item_text(original, key);
    pred[std::string(item_name(key))] = *derived.get(key);
  }
  std::map<ItemKey, ItemScore> out;
  for (auto& [name, score] : score_items(gt, pred, judge)) out[*parse_item(name)] = score;
  return out;
}

GroupCoverage coverage_over(const std::vector<DialogueCoverage>& dialogues, const std::vector<ItemKey>& items) {
  GroupCoverage g;
  g.k = static_cast<int>(items.size());
  g.n_dialogues = static_cast<int>(dialogues.size());
  if (dialogues.empty() || items.empty()) return g;
  double icov_sum = 0.0;
  double icon_sum = 0.0;
  for (auto& d : dialogues) {
    int n = 0;
    double total = 0.0;
    for (auto key : items) {
      if (auto it = d.scores.find(key); it != d.scores.end()) {
        ++n;
        total += it->second;
      }
    }
    icov_sum += static_cast<double>(n) / g.k;
    if (n > 0) {
      icon_sum += total / n;
      ++g.n_icon_dialogues;
    }
  }
  g.icov = icov_sum / g.n_dialogues;
  if (g.n_icon_dialogues > 0) {
    g.icon = icon_sum / g.n_icon_dialogues;
    g.weighted_icon = weighted_icon(g.icov, *g.icon);
  }
  return g;
}

CoverageReport compute_coverage(const std::vector<PatientProfile>& originals,
                                const std::vector<DerivedProfile>& deriveds,
                                const std::vector<std::map<ItemKey, int>>& scores) {
  if (originals.size() != deriveds.size() || originals.size() != scores.size()) {
    throw AlignmentError("coverage inputs differ in length: " + std::to_string(originals.size()) + " originals, " +
                         std::to_string(deriveds.size()) + " derived profiles, " + std::to_string(scores.size()) +
                         " score sets");
  }
  CoverageReport r;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    if (originals[i].profile_id != deriveds[i].profile_id) {
      throw AlignmentError("position " + std::to_string(i) + ": original '" + originals[i].profile_id +
                           "' paired with derived '" + deriveds[i].profile_id + "'");
    }
    DialogueCoverage d;
    d.profile_id = originals[i].profile_id;
    for (auto key : overlap_items(originals[i], deriveds[i])) {
      auto it = scores[i].find(key);
      if (it == scores[i].end()) {
        throw AlignmentError("profile '" + d.profile_id + "' has no score for overlapping item '" +
                             std::string(item_name(key)) + "'");
      }
      if (it->second < 1 || it->second > 4) {
        throw PreconditionError("score for '" + std::string(item_name(key)) + "' outside 1..4");
      }
      d.scores[key] = it->second;
    }
    r.dialogues.push_back(std::move(d));
  }
  for (auto g : kItemGroups) r.groups[g] = coverage_over(r.dialogues, group_members(g));
  r.overall = coverage_over(r.dialogues, coverage_items());
  return r;
}

ValidationResult validate_coverage(const CoverageReport& r) {
  ValidationResult v;
  auto check = [&](const std::string& path, const GroupCoverage& g) {
    if (g.icov < 0.0 || g.icov > 1.0) v.violations.push_back({path + ".icov", "outside [0, 1]"});
    if (g.icon.has_value() != (g.n_icon_dialogues > 0)) {
      v.violations.push_back({path + ".icon", "present iff some dialogue has a non-empty overlap"});
    }
    if (g.icon && (*g.icon < 1.0 || *g.icon > 4.0)) v.violations.push_back({path + ".icon", "outside [1, 4]"});
    if (g.icon.has_value() != g.weighted_icon.has_value() ||
        (g.icon && std::abs(*g.weighted_icon - g.icov * *g.icon) > 1e-12)) {
      v.violations.push_back({path + ".weighted_icon", "must equal icov * icon"});
    }
  };
  double k_weighted = 0.0;
  int k_total = 0;
  for (auto& [group, g] : r.groups) {
    check(std::string(group_name(group)), g);
    k_weighted += g.icov * g.k;
    k_total += g.k;
  }
  check("overall", r.overall);
  if (k_total > 0 && std::abs(k_weighted / k_total - r.overall.icov) > 1e-12) {
    v.violations.push_back({"overall.icov", "must be the K-weighted mean of the group values"});
  }
  for (auto& d : r.dialogues) {
    for (auto g : kItemGroups) {
      const auto& members = group_members(g);
      auto n = std::count_if(d.scores.begin(), d.scores.end(), [&](auto& kv) {
        return std::find(members.begin(), members.end(), kv.first) != members.end();
      });
      if (n > static_cast<long>(members.size())) v.violations.push_back({d.profile_id, "overlap exceeds K"});
    }
  }
  return v;
}

json coverage_to_json(const CoverageReport& r) {
  auto num = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  auto group = [&](const GroupCoverage& g) {
    return json{{"k", g.k},
                {"n_dialogues", g.n_dialogues},
                {"n_icon_dialogues", g.n_icon_dialogues},
                {"icov", g.icov},
                {"icon", num(g.icon)},
                {"weighted_icon", num(g.weighted_icon)}};
  };
  json groups = json::object();
  for (auto& [g, cov] : r.groups) groups[std::string(group_name(g))] = group(cov);
  json dialogues = json::array();
  for (auto& d : r.dialogues) {
    json scores = json::object();
    for (auto& [key, s] : d.scores) scores[std::string(item_name(key))] = s;
    dialogues.push_back({{"profile_id", d.profile_id}, {"scores", scores}});
  }
  return {{"groups", groups}, {"overall", group(r.overall)}, {"dialogues", dialogues}};
}

}  // namespace medsim
