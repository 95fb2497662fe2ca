#include "medsim/profile.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <unordered_set>

#include "medsim/error.hpp"
#include "medsim/support.hpp"
#include "medsim/text.hpp"

namespace medsim {

using nlohmann::json;

namespace {

struct ItemInfo {
  ItemKey key;
  std::string_view name;
  std::string_view label;
};

constexpr std::array<ItemInfo, kItemCount> kItems{{
    {ItemKey::age, "age", "Age"},
    {ItemKey::gender, "gender", "Gender"},
    {ItemKey::race, "race", "Race"},
    {ItemKey::tobacco, "tobacco", "Tobacco"},
    {ItemKey::alcohol, "alcohol", "Alcohol"},
    {ItemKey::illicit_drug, "illicit_drug", "Illicit drug use"},
    {ItemKey::sexual_history, "sexual_history", "Sexual History"},
    {ItemKey::exercise, "exercise", "Exercise"},
    {ItemKey::marital_status, "marital_status", "Marital status"},
    {ItemKey::children, "children", "Children"},
    {ItemKey::living_situation, "living_situation", "Living Situation"},
    {ItemKey::occupation, "occupation", "Occupation"},
    {ItemKey::insurance, "insurance", "Insurance"},
    {ItemKey::allergies, "allergies", "Allergies"},
    {ItemKey::family_medical_history, "family_medical_history", "Family medical history"},
    {ItemKey::medical_device, "medical_device", "Medical devices used before this ED admission"},
    {ItemKey::medical_history, "medical_history", "Medical history prior to this ED admission"},
    {ItemKey::present_illness, "present_illness", "Present illness"},
    {ItemKey::chief_complaint, "chief_complaint", "ED chief complaint"},
    {ItemKey::pain, "pain", "Pain level at ED Admission (0 = no pain, 10 = worst pain imaginable)"},
    {ItemKey::medication, "medication", "Current medications they are taking"},
    {ItemKey::arrival_transport, "arrival_transport", "ED Arrival Transport"},
    {ItemKey::disposition, "disposition", "ED disposition"},
    {ItemKey::diagnosis, "diagnosis", "ED Diagnosis"},
}};

// Profile JSON keys for optional text items. Names follow the prompt slot
// names, so "chiefcomplaint" rather than "chief_complaint".
struct TextFieldSpec {
  std::string_view json_key;
  ItemKey key;
};

constexpr std::array<TextFieldSpec, 15> kTextFields{{
    {"tobacco", ItemKey::tobacco},
    {"alcohol", ItemKey::alcohol},
    {"illicit_drug", ItemKey::illicit_drug},
    {"sexual_history", ItemKey::sexual_history},
    {"exercise", ItemKey::exercise},
    {"marital_status", ItemKey::marital_status},
    {"children", ItemKey::children},
    {"living_situation", ItemKey::living_situation},
    {"occupation", ItemKey::occupation},
    {"insurance", ItemKey::insurance},
    {"allergies", ItemKey::allergies},
    {"family_medical_history", ItemKey::family_medical_history},
    {"medical_device", ItemKey::medical_device},
    {"medical_history", ItemKey::medical_history},
    {"chiefcomplaint", ItemKey::chief_complaint},
}};

// The 14 keys (13 items, present illness split in two) produced from notes.
constexpr std::array<std::string_view, 14> kNoteDerivedKeys{
    "occupation",     "living_situation", "children",
    "exercise",       "tobacco",          "alcohol",
    "illicit_drug",   "sexual_history",   "allergies",
    "medical_history", "family_medical_history", "medical_device",
    "present_illness_positive", "present_illness_negative"};

Field field_from_value(const std::string& v) {
  if (v == kNotRecorded) return std::nullopt;
  return v;
}

json field_to_json(const Field& f) { return f ? json(*f) : json(std::string(kNotRecorded)); }

const json& require(const json& j, std::string_view key) {
  auto it = j.find(std::string(key));
  if (it == j.end()) throw ParseError(std::string(key), "missing field");
  return *it;
}

std::string require_string(const json& j, std::string_view key) {
  const json& v = require(j, key);
  if (!v.is_string()) throw ParseError(std::string(key), "expected string");
  return v.get<std::string>();
}

int require_int(const json& j, std::string_view key) {
  const json& v = require(j, key);
  if (!v.is_number_integer()) throw ParseError(std::string(key), "expected integer");
  return v.get<int>();
}

Field* note_field(PatientProfile& p, std::string_view key) {
  if (key == "present_illness_positive") return &p.present_illness.positive;
  if (key == "present_illness_negative") return &p.present_illness.negative;
  if (auto item = parse_item(key)) return text_field(p, *item);
  return nullptr;
}

bool is_unknown_value(std::string_view v) {
  static const std::set<std::string> kUnknown{"",        "unknown",  "unable to obtain",
                                              "patient declined to answer", "declined",
                                              "not recorded", "n/a",  "na", "none", "?"};
  return kUnknown.contains(to_lower(trim(v)));
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive phrase search that only matches at word boundaries.
bool contains_phrase(std::string_view text, std::string_view phrase) {
  const std::string hay = to_lower(text);
  const std::string needle = to_lower(phrase);
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    bool left = pos == 0 || !is_word_char(hay[pos - 1]);
    std::size_t end = pos + needle.size();
    bool right = end >= hay.size() || !is_word_char(hay[end]);
    if (left && right) return true;
    ++pos;
  }
  return false;
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& line : split_lines(read_text_file(path))) {
    auto w = trim(line);
    if (w.empty() || w[0] == '#') continue;
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

std::vector<std::string> draw(std::vector<std::string> pool, std::size_t k, std::uint64_t seed,
                              std::string_view what) {
  if (pool.size() < k) {
    throw LexiconError(std::string(what) + ": lexicon has " + std::to_string(pool.size()) +
                       " words, need " + std::to_string(k));
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

const std::array<ItemKey, kItemCount>& all_items() {
  static const auto items = [] {
    std::array<ItemKey, kItemCount> a{};
    for (std::size_t i = 0; i < kItemCount; ++i) a[i] = kItems[i].key;
    return a;
  }();
  return items;
}

const std::array<ItemKey, kLinkageCount>& linkage_items() {
  static const auto items = [] {
    std::array<ItemKey, kLinkageCount> a{};
    std::size_t n = 0;
    for (auto& info : kItems) {
      if (info.key != ItemKey::disposition) a[n++] = info.key;
    }
    return a;
  }();
  return items;
}

std::string_view item_name(ItemKey key) { return kItems[static_cast<std::size_t>(key)].name; }
std::string_view item_label(ItemKey key) { return kItems[static_cast<std::size_t>(key)].label; }

std::optional<ItemKey> parse_item(std::string_view name) {
  for (auto& info : kItems) {
    if (info.name == name) return info.key;
  }
  if (name == "chiefcomplaint") return ItemKey::chief_complaint;
  if (name == "medications") return ItemKey::medication;
  return std::nullopt;
}

bool hidden_from_doctor(ItemKey key) {
  return key == ItemKey::disposition || key == ItemKey::diagnosis;
}

std::string_view group_name(ItemGroup g) {
  switch (g) {
    case ItemGroup::social: return "social";
    case ItemGroup::pmh: return "pmh";
    case ItemGroup::current_visit: return "current_visit";
  }
  return "?";
}

const std::vector<ItemKey>& group_members(ItemGroup g) {
  static const std::vector<ItemKey> social{
      ItemKey::tobacco,        ItemKey::alcohol,  ItemKey::illicit_drug,     ItemKey::sexual_history,
      ItemKey::exercise,       ItemKey::marital_status, ItemKey::children,   ItemKey::living_situation,
      ItemKey::occupation,     ItemKey::insurance};
  static const std::vector<ItemKey> pmh{ItemKey::allergies, ItemKey::family_medical_history,
                                        ItemKey::medical_device, ItemKey::medical_history};
  static const std::vector<ItemKey> visit{ItemKey::present_illness, ItemKey::chief_complaint,
                                          ItemKey::pain, ItemKey::medication,
                                          ItemKey::arrival_transport};
  switch (g) {
    case ItemGroup::social: return social;
    case ItemGroup::pmh: return pmh;
    case ItemGroup::current_visit: return visit;
  }
  return social;
}

std::string display(const Field& f) { return f ? *f : std::string(kNotRecorded); }

Field* text_field(PatientProfile& p, ItemKey key) {
  switch (key) {
    case ItemKey::tobacco: return &p.tobacco;
    case ItemKey::alcohol: return &p.alcohol;
    case ItemKey::illicit_drug: return &p.illicit_drug;
    case ItemKey::sexual_history: return &p.sexual_history;
    case ItemKey::exercise: return &p.exercise;
    case ItemKey::marital_status: return &p.marital_status;
    case ItemKey::children: return &p.children;
    case ItemKey::living_situation: return &p.living_situation;
    case ItemKey::occupation: return &p.occupation;
    case ItemKey::insurance: return &p.insurance;
    case ItemKey::allergies: return &p.allergies;
    case ItemKey::family_medical_history: return &p.family_medical_history;
    case ItemKey::medical_device: return &p.medical_device;
    case ItemKey::medical_history: return &p.medical_history;
    case ItemKey::chief_complaint: return &p.chief_complaint;
    default: return nullptr;
  }
}

Field item_text(const PatientProfile& p, ItemKey key) {
  auto non_empty = [](const std::string& s) -> Field {
    if (s.empty()) return std::nullopt;
    return s;
  };
  switch (key) {
    case ItemKey::age: return std::to_string(p.age);
    case ItemKey::gender: return non_empty(p.gender);
    case ItemKey::race: return non_empty(p.race);
    case ItemKey::present_illness:
      if (!p.present_illness.positive && !p.present_illness.negative) return std::nullopt;
      return "positive: " + display(p.present_illness.positive) +
             "; negative (denied): " + display(p.present_illness.negative);
    case ItemKey::pain: return std::to_string(p.pain);
    case ItemKey::medication:
      if (!p.medications || p.medications->empty()) return std::nullopt;
      return join(*p.medications, "; ");
    case ItemKey::arrival_transport: return non_empty(p.arrival_transport);
    case ItemKey::disposition: return non_empty(p.disposition);
    case ItemKey::diagnosis: return non_empty(p.diagnosis);
    default: {
      auto* f = text_field(const_cast<PatientProfile&>(p), key);
      return f ? *f : std::nullopt;
    }
  }
}

PatientProfile profile_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("", "profile must be an object");
  static const std::set<std::string> kKnown = [] {
    std::set<std::string> k{"profile_id", "age", "gender", "race",
                            "present_illness_positive", "present_illness_negative",
                            "pain", "medication", "arrival_transport", "disposition", "diagnosis"};
    for (auto& f : kTextFields) k.emplace(f.json_key);
    return k;
  }();
  for (auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) throw ParseError(key, "unknown field");
  }

  PatientProfile p;
  p.profile_id = require_string(j, "profile_id");
  p.age = require_int(j, "age");
  p.gender = require_string(j, "gender");
  p.race = require_string(j, "race");
  for (auto& f : kTextFields) {
    *text_field(p, f.key) = field_from_value(require_string(j, f.json_key));
  }
  p.present_illness.positive = field_from_value(require_string(j, "present_illness_positive"));
  p.present_illness.negative = field_from_value(require_string(j, "present_illness_negative"));
  p.pain = require_int(j, "pain");
  const json& meds = require(j, "medication");
  if (meds.is_string()) {
    if (meds.get<std::string>() != kNotRecorded) {
      throw ParseError("medication", "expected list or \"Not recorded\"");
    }
  } else if (meds.is_array()) {
    std::vector<std::string> list;
    for (std::size_t i = 0; i < meds.size(); ++i) {
      if (!meds[i].is_string()) {
        throw ParseError("medication[" + std::to_string(i) + "]", "expected string");
      }
      list.push_back(meds[i].get<std::string>());
    }
    p.medications = std::move(list);
  } else {
    throw ParseError("medication", "expected list or \"Not recorded\"");
  }
  p.arrival_transport = require_string(j, "arrival_transport");
  p.disposition = require_string(j, "disposition");
  p.diagnosis = require_string(j, "diagnosis");
  return p;
}

json profile_to_json(const PatientProfile& p) {
  json j = json::object();
  j["profile_id"] = p.profile_id;
  j["age"] = p.age;
  j["gender"] = p.gender;
  j["race"] = p.race;
  for (auto& f : kTextFields) {
    j[std::string(f.json_key)] = field_to_json(*text_field(const_cast<PatientProfile&>(p), f.key));
  }
  j["present_illness_positive"] = field_to_json(p.present_illness.positive);
  j["present_illness_negative"] = field_to_json(p.present_illness.negative);
  j["pain"] = p.pain;
  j["medication"] = p.medications ? json(*p.medications) : json(std::string(kNotRecorded));
  j["arrival_transport"] = p.arrival_transport;
  j["disposition"] = p.disposition;
  j["diagnosis"] = p.diagnosis;
  return j;
}

namespace {

std::vector<json> load_json_records(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<json> out;
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return out;
  if (text[first] == '[') {
    json arr;
    try {
      arr = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), e.what());
    }
    for (auto& v : arr) out.push_back(v);
    return out;
  }
  // Whole-file object first, then line-delimited.
  try {
    out.push_back(json::parse(text));
    return out;
  } catch (const json::parse_error&) {
  }
  std::size_t lineno = 0;
  for (auto& line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno), e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<PatientProfile> load_profiles(const std::filesystem::path& path) {
  std::vector<PatientProfile> out;
  std::size_t i = 0;
  for (auto& j : load_json_records(path)) {
    try {
      out.push_back(profile_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError("[" + std::to_string(i) + "]." + e.path(), e.what());
    }
    ++i;
  }
  return out;
}

void save_profiles(const std::filesystem::path& path, std::span<const PatientProfile> profiles) {
  std::string text;
  for (auto& p : profiles) {
    text += profile_to_json(p).dump();
    text += '\n';
  }
  write_text_file(path, text);
}

ValidationResult validate_profile(const PatientProfile& p) {
  ValidationResult r;
  auto add = [&](std::string path, std::string msg) {
    r.violations.push_back({std::move(path), std::move(msg)});
  };
  if (p.profile_id.empty()) add("profile_id", "empty profile id");
  if (p.age < 0 || p.age > 130) add("age", "age outside 0-130");
  if (p.gender.empty()) add("gender", "gender missing");
  if (p.race.empty()) add("race", "race missing");
  if (p.pain < 0 || p.pain > 10) add("pain", "pain outside 0–10");
  if (p.medications && p.medications->size() > static_cast<std::size_t>(kMaxMedications)) {
    add("medication", "medications > 15");
  }
  if (p.arrival_transport.empty()) add("arrival_transport", "arrival transport missing");
  if (p.disposition.empty()) add("disposition", "disposition missing");
  if (p.diagnosis.empty()) add("diagnosis", "diagnosis missing");
  for (auto& f : kTextFields) {
    const Field& v = *text_field(const_cast<PatientProfile&>(p), f.key);
    if (v && v->empty()) add(std::string(f.json_key), "empty string; use \"Not recorded\"");
  }
  if (p.present_illness.positive && p.present_illness.positive->empty()) {
    add("present_illness_positive", "empty string; use \"Not recorded\"");
  }
  if (p.present_illness.negative && p.present_illness.negative->empty()) {
    add("present_illness_negative", "empty string; use \"Not recorded\"");
  }
  return r;
}

// --- raw records ------------------------------------------------------------

RawRecord raw_record_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("", "raw record must be an object");
  RawRecord r;
  auto opt_string = [&](std::string_view key) -> std::string {
    auto it = j.find(std::string(key));
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
    throw ParseError(std::string(key), "expected string");
  };
  r.record_id = opt_string("record_id");
  if (r.record_id.empty()) throw ParseError("record_id", "missing field");
  if (auto it = j.find("age"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ParseError("age", "expected integer");
    r.age = it->get<int>();
  }
  r.gender = opt_string("gender");
  r.race = opt_string("race");
  r.marital_status = opt_string("marital_status");
  r.insurance = opt_string("insurance");
  r.chiefcomplaint = opt_string("chiefcomplaint");
  r.arrival_transport = opt_string("arrival_transport");
  r.disposition = opt_string("disposition");
  r.diagnosis = opt_string("diagnosis");
  r.pain = opt_string("pain");
  if (auto it = j.find("medications"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("medications", "expected list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) {
        throw ParseError("medications[" + std::to_string(i) + "]", "expected string");
      }
      r.medications.push_back((*it)[i].get<std::string>());
    }
  }
  if (auto it = j.find("note"); it != j.end()) {
    if (!it->is_object()) throw ParseError("note", "expected object");
    auto sec = [&](std::string_view key) -> std::string {
      auto s = it->find(std::string(key));
      if (s == it->end() || s->is_null()) return {};
      if (!s->is_string()) throw ParseError("note." + std::string(key), "expected string");
      return s->get<std::string>();
    };
    r.note.allergies = sec("allergies");
    r.note.chief_complaint = sec("chief_complaint");
    r.note.hpi = sec("hpi");
    r.note.pmh = sec("pmh");
    r.note.social_history = sec("social_history");
    r.note.family_history = sec("family_history");
  }
  if (auto it = j.find("extracted"); it != j.end()) {
    if (!it->is_object()) throw ParseError("extracted", "expected object");
    for (auto& [key, value] : it->items()) {
      if (std::find(kNoteDerivedKeys.begin(), kNoteDerivedKeys.end(), key) == kNoteDerivedKeys.end()) {
        throw ParseError("extracted." + key, "not a note-derived item");
      }
      if (!value.is_string()) throw ParseError("extracted." + key, "expected string");
      r.extracted.emplace_back(key, value.get<std::string>());
    }
  }
  return r;
}

json raw_record_to_json(const RawRecord& r) {
  json j = json::object();
  j["record_id"] = r.record_id;
  j["age"] = r.age ? json(*r.age) : json(nullptr);
  j["gender"] = r.gender;
  j["race"] = r.race;
  j["marital_status"] = r.marital_status;
  j["insurance"] = r.insurance;
  j["chiefcomplaint"] = r.chiefcomplaint;
  j["arrival_transport"] = r.arrival_transport;
  j["disposition"] = r.disposition;
  j["diagnosis"] = r.diagnosis;
  j["pain"] = r.pain;
  j["medications"] = r.medications;
  j["note"] = {{"allergies", r.note.allergies},
               {"chief_complaint", r.note.chief_complaint},
               {"hpi", r.note.hpi},
               {"pmh", r.note.pmh},
               {"social_history", r.note.social_history},
               {"family_history", r.note.family_history}};
  json ex = json::object();
  for (auto& [k, v] : r.extracted) ex[k] = v;
  j["extracted"] = ex;
  return j;
}

std::vector<RawRecord> load_raw_records(const std::filesystem::path& path) {
  std::vector<RawRecord> out;
  std::size_t i = 0;
  for (auto& j : load_json_records(path)) {
    try {
      out.push_back(raw_record_from_json(j));
    } catch (const ParseError& e) {
      throw ParseError("[" + std::to_string(i) + "]." + e.path(), e.what());
    }
    ++i;
  }
  return out;
}

RawRecord raw_record_from_profile(const PatientProfile& p, NoteSections notes) {
  RawRecord r;
  r.record_id = p.profile_id;
  r.age = p.age;
  r.gender = p.gender;
  r.race = p.race;
  r.marital_status = p.marital_status.value_or("");
  r.insurance = p.insurance.value_or("");
  r.chiefcomplaint = p.chief_complaint.value_or("");
  r.arrival_transport = p.arrival_transport;
  r.disposition = p.disposition;
  r.diagnosis = p.diagnosis;
  r.pain = std::to_string(p.pain);
  if (p.medications) r.medications = *p.medications;
  r.note = std::move(notes);
  PatientProfile copy = p;
  for (auto key : kNoteDerivedKeys) {
    if (Field* f = note_field(copy, key); f && *f) r.extracted.emplace_back(std::string(key), **f);
  }
  return r;
}

std::string_view filter_rule_name(FilterRule r) {
  switch (r) {
    case FilterRule::missing_field: return "missing_field";
    case FilterRule::pain_non_numeric: return "pain_non_numeric";
    case FilterRule::pain_out_of_range: return "pain_out_of_range";
    case FilterRule::hpi_too_short: return "hpi_too_short";
    case FilterRule::hpi_too_long: return "hpi_too_long";
    case FilterRule::pmh_too_long: return "pmh_too_long";
    case FilterRule::excluded_consciousness: return "excluded_consciousness";
    case FilterRule::excluded_language: return "excluded_language";
  }
  return "?";
}

FilterOutcome apply_cohort_filters(const RawRecord& r) {
  FilterOutcome out;
  auto reject = [&](FilterRule rule, std::string detail) {
    out.reasons.push_back({rule, std::move(detail)});
  };

  const std::pair<std::string_view, const std::string*> required[] = {
      {"marital_status", &r.marital_status}, {"insurance", &r.insurance},
      {"race", &r.race},                     {"chiefcomplaint", &r.chiefcomplaint},
      {"arrival_transport", &r.arrival_transport}, {"gender", &r.gender},
      {"disposition", &r.disposition},       {"diagnosis", &r.diagnosis}};
  for (auto& [name, value] : required) {
    if (is_unknown_value(*value)) reject(FilterRule::missing_field, std::string(name) + " missing or unknown");
  }
  if (!r.age) reject(FilterRule::missing_field, "age missing");

  int pain = 0;
  {
    const std::string text = trim(r.pain);
    char* end = nullptr;
    double v = text.empty() ? 0.0 : std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
      reject(FilterRule::pain_non_numeric, "pain '" + r.pain + "' is not numeric");
    } else if (v < 0.0 || v > 10.0) {
      reject(FilterRule::pain_out_of_range, "pain " + text + " outside the 0-10 range");
    } else {
      pain = static_cast<int>(std::lround(v));
      if (static_cast<double>(pain) != v) out.notes.push_back("pain " + text + " rounded to " + std::to_string(pain));
    }
  }

  const auto hpi_words = word_count(r.note.hpi);
  if (hpi_words < kHpiMinWords) {
    reject(FilterRule::hpi_too_short, "HPI below minimum (" + std::to_string(hpi_words) + " words)");
  } else if (hpi_words > kHpiMaxWords) {
    reject(FilterRule::hpi_too_long, "HPI above maximum (" + std::to_string(hpi_words) + " words)");
  }
  if (auto pmh_words = word_count(r.note.pmh); pmh_words > kPmhMaxWords) {
    reject(FilterRule::pmh_too_long, "PMH above maximum (" + std::to_string(pmh_words) + " words)");
  }

  static constexpr std::string_view kConsciousness[] = {"coma", "stupor", "altered mental status"};
  static constexpr std::string_view kLanguage[] = {"slurred speech", "dysarthria", "aphasia"};
  const std::string_view sections[] = {r.chiefcomplaint, r.note.chief_complaint, r.note.hpi};
  auto scan = [&](std::span<const std::string_view> terms, FilterRule rule) {
    for (auto term : terms) {
      for (auto sec : sections) {
        if (contains_phrase(sec, term)) {
          reject(rule, "exclusion term '" + std::string(term) + "'");
          return;
        }
      }
    }
  };
  scan(kConsciousness, FilterRule::excluded_consciousness);
  scan(kLanguage, FilterRule::excluded_language);

  if (!out.reasons.empty()) return out;

  PatientProfile p;
  p.profile_id = r.record_id;
  p.age = *r.age;
  p.gender = r.gender;
  p.race = r.race;
  p.marital_status = r.marital_status;
  p.insurance = r.insurance;
  p.chief_complaint = r.chiefcomplaint;
  p.arrival_transport = r.arrival_transport;
  p.disposition = r.disposition;
  p.diagnosis = r.diagnosis;
  p.pain = pain;
  if (!r.medications.empty()) {
    std::vector<std::string> meds = r.medications;
    if (meds.size() > static_cast<std::size_t>(kMaxMedications)) {
      out.notes.push_back("medications truncated from " + std::to_string(meds.size()) + " to " +
                          std::to_string(kMaxMedications));
      meds.resize(kMaxMedications);
    }
    p.medications = std::move(meds);
  }
  for (auto& [key, value] : r.extracted) {
    if (Field* f = note_field(p, key)) *f = field_from_value(value);
  }
  out.accepted = true;
  out.normalized = std::move(p);
  return out;
}

// --- CEFR -------------------------------------------------------------------

std::string_view cefr_name(CefrLevel l) {
  switch (l) {
    case CefrLevel::A: return "A";
    case CefrLevel::B: return "B";
    case CefrLevel::C: return "C";
  }
  return "?";
}

std::optional<CefrLevel> parse_cefr(std::string_view s) {
  if (s == "A" || s == "A_basic" || s == "basic") return CefrLevel::A;
  if (s == "B" || s == "B_intermediate" || s == "intermediate") return CefrLevel::B;
  if (s == "C" || s == "C_advanced" || s == "advanced") return CefrLevel::C;
  return std::nullopt;
}

std::vector<CefrLexicon> load_lexicons(const std::filesystem::path& dir) {
  std::vector<CefrLexicon> out;
  for (auto level : {CefrLevel::A, CefrLevel::B, CefrLevel::C}) {
    auto general = dir / ("general_" + std::string(cefr_name(level)) + ".txt");
    auto medical = dir / ("medical_" + std::string(cefr_name(level)) + ".txt");
    if (!std::filesystem::exists(general) && !std::filesystem::exists(medical)) continue;
    CefrLexicon lex;
    lex.level = level;
    if (std::filesystem::exists(general)) lex.general_words = read_word_list(general);
    if (std::filesystem::exists(medical)) lex.medical_words = read_word_list(medical);
    out.push_back(std::move(lex));
  }
  if (out.empty()) throw LexiconError("no lexicon files under " + dir.string());
  return out;
}

WordSample sample_cefr_words(std::span<const CefrLexicon> lexicons, CefrLevel level,
                             std::uint64_t seed) {
  auto find = [&](CefrLevel l) -> const CefrLexicon* {
    for (auto& lex : lexicons) {
      if (lex.level == l) return &lex;
    }
    return nullptr;
  };
  const CefrLexicon* own = find(level);
  if (!own) throw LexiconError("no lexicon for level " + std::string(cefr_name(level)));

  // Beyond-level pool: every higher level, minus anything listed at this level.
  auto beyond = [&](auto member) {
    std::vector<std::string> pool;
    std::unordered_set<std::string> seen((own->*member).begin(), (own->*member).end());
    for (int l = static_cast<int>(level) + 1; l <= static_cast<int>(CefrLevel::C); ++l) {
      const CefrLexicon* lex = find(static_cast<CefrLevel>(l));
      if (!lex) continue;
      for (auto& w : lex->*member) {
        if (seen.insert(w).second) pool.push_back(w);
      }
    }
    return pool;
  };

  const std::string lvl(cefr_name(level));
  WordSample w;
  w.level = level;
  w.understand_words = draw(own->general_words, kWordsPerSlot, splitmix64(seed ^ 0x1), "general_" + lvl);
  w.understand_med_words = draw(own->medical_words, kWordsPerSlot, splitmix64(seed ^ 0x2), "medical_" + lvl);
  if (level != CefrLevel::C) {
    w.misunderstand_words = draw(beyond(&CefrLexicon::general_words), kWordsPerSlot,
                                 splitmix64(seed ^ 0x3), "general beyond " + lvl);
    w.misunderstand_med_words = draw(beyond(&CefrLexicon::medical_words), kWordsPerSlot,
                                     splitmix64(seed ^ 0x4), "medical beyond " + lvl);
  }
  return w;
}

json word_sample_to_json(const WordSample& w) {
  return {{"level", std::string(cefr_name(w.level))},
          {"understand_words", w.understand_words},
          {"misunderstand_words", w.misunderstand_words},
          {"understand_med_words", w.understand_med_words},
          {"misunderstand_med_words", w.misunderstand_med_words}};
}

WordSample word_sample_from_json(const json& j) {
  WordSample w;
  auto level = parse_cefr(j.at("level").get<std::string>());
  if (!level) throw ParseError("level", "unknown CEFR level");
  w.level = *level;
  w.understand_words = j.at("understand_words").get<std::vector<std::string>>();
  w.misunderstand_words = j.at("misunderstand_words").get<std::vector<std::string>>();
  w.understand_med_words = j.at("understand_med_words").get<std::vector<std::string>>();
  w.misunderstand_med_words = j.at("misunderstand_med_words").get<std::vector<std::string>>();
  return w;
}

// --- rendering --------------------------------------------------------------

ProfileSections render_profile_sections(const PatientProfile& p) {
  auto line = [](std::string& out, int depth, std::string_view label, std::string_view value) {
    out.append(static_cast<std::size_t>(depth) * 4, ' ');
    out += "- ";
    out += label;
    out += ": ";
    out += value;
    out += '\n';
  };
  auto header = [](std::string& out, std::string_view label) {
    out += "- ";
    out += label;
    out += ":\n";
  };
  auto item = [&](std::string& out, int depth, ItemKey key) {
    line(out, depth, item_label(key), display(item_text(p, key)));
  };

  ProfileSections s;
  header(s.background, "Demographics");
  for (auto k : {ItemKey::age, ItemKey::gender, ItemKey::race}) item(s.background, 1, k);
  header(s.background, "Social History");
  for (auto k : group_members(ItemGroup::social)) item(s.background, 1, k);
  header(s.background, "Previous Medical History");
  for (auto k : group_members(ItemGroup::pmh)) item(s.background, 1, k);

  header(s.current_visit, "Present illness");
  line(s.current_visit, 1, "positive", display(p.present_illness.positive));
  line(s.current_visit, 1, "negative (denied)", display(p.present_illness.negative));
  for (auto k : {ItemKey::chief_complaint, ItemKey::pain, ItemKey::medication,
                 ItemKey::arrival_transport, ItemKey::disposition, ItemKey::diagnosis}) {
    item(s.current_visit, 0, k);
  }
  // Drop the trailing newline so the sections embed cleanly in templates.
  if (!s.background.empty()) s.background.pop_back();
  if (!s.current_visit.empty()) s.current_visit.pop_back();
  return s;
}

Slots profile_slots(const PatientProfile& p) {
  Slots s;
  s["profile_id"] = p.profile_id;
  s["age"] = std::to_string(p.age);
  s["gender"] = p.gender;
  s["race"] = p.race;
  for (auto& f : kTextFields) s[std::string(f.json_key)] = display(*text_field(const_cast<PatientProfile&>(p), f.key));
  s["present_illness_positive"] = display(p.present_illness.positive);
  s["present_illness_negative"] = display(p.present_illness.negative);
  s["pain"] = std::to_string(p.pain);
  s["medication"] = display(item_text(p, ItemKey::medication));
  s["arrival_transport"] = p.arrival_transport;
  s["disposition"] = p.disposition;
  s["diagnosis"] = p.diagnosis;
  return s;
}

}  // namespace medsim
