#include "medsim/persona.hpp"

#include <map>
#include <mutex>

#include "medsim/error.hpp"
#include "medsim/support.hpp"
#include "medsim/text.hpp"

namespace medsim {

using nlohmann::json;

std::string_view personality_name(Personality p) {
  switch (p) {
    case Personality::neutral: return "neutral";
    case Personality::distrustful: return "distrustful";
    case Personality::impatient: return "impatient";
    case Personality::overanxious: return "overanxious";
    case Personality::overly_positive: return "overly_positive";
    case Personality::verbose: return "verbose";
  }
  return "?";
}

std::string_view recall_name(Recall r) { return r == Recall::high ? "high" : "low"; }
std::string_view confusion_name(Confusion c) { return c == Confusion::high ? "high" : "normal"; }

std::optional<Personality> parse_personality(std::string_view s) {
  for (auto p : kPersonalities) {
    if (personality_name(p) == s) return p;
  }
  return std::nullopt;
}

std::optional<Recall> parse_recall(std::string_view s) {
  if (s == "high") return Recall::high;
  if (s == "low") return Recall::low;
  return std::nullopt;
}

std::optional<Confusion> parse_confusion(std::string_view s) {
  if (s == "normal") return Confusion::normal;
  if (s == "high") return Confusion::high;
  return std::nullopt;
}

std::string persona_code(const PersonaSpec& s) {
  std::string out(personality_name(s.personality));
  out += '-';
  out += cefr_name(s.language);
  out += '-';
  out += recall_name(s.recall);
  out += '-';
  out += confusion_name(s.confusion);
  return out;
}

std::optional<PersonaSpec> parse_persona_code(std::string_view code) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    auto dash = code.find('-', start);
    parts.emplace_back(code.substr(start, dash == std::string_view::npos ? dash : dash - start));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (parts.size() != 4) return std::nullopt;
  auto p = parse_personality(parts[0]);
  auto l = parse_cefr(parts[1]);
  auto r = parse_recall(parts[2]);
  auto c = parse_confusion(parts[3]);
  if (!p || !l || !r || !c) return std::nullopt;
  return PersonaSpec{*p, *l, *r, *c};
}

json persona_to_json(const PersonaSpec& s) {
  return {{"personality", std::string(personality_name(s.personality))},
          {"language", std::string(cefr_name(s.language))},
          {"recall", std::string(recall_name(s.recall))},
          {"confusion", std::string(confusion_name(s.confusion))}};
}

PersonaSpec persona_from_json(const json& j) {
  if (j.is_string()) {
    auto s = parse_persona_code(j.get<std::string>());
    if (!s) throw ParseError("persona", "unknown persona code '" + j.get<std::string>() + "'");
    return *s;
  }
  if (!j.is_object()) throw ParseError("persona", "expected code string or object");
  auto field = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ParseError(std::string("persona.") + key, "missing or not a string");
    return it->get<std::string>();
  };
  PersonaSpec s;
  auto p = parse_personality(field("personality"));
  if (!p) throw ParseError("persona.personality", "unknown value");
  auto l = parse_cefr(field("language"));
  if (!l) throw ParseError("persona.language", "unknown value");
  auto r = parse_recall(field("recall"));
  if (!r) throw ParseError("persona.recall", "unknown value");
  auto c = parse_confusion(field("confusion"));
  if (!c) throw ParseError("persona.confusion", "unknown value");
  return {*p, *l, *r, *c};
}

std::vector<PersonaSpec> persona_product() {
  std::vector<PersonaSpec> out;
  out.reserve(72);
  for (auto c : kConfusions) {
    for (auto p : kPersonalities) {
      for (auto l : kLanguages) {
        for (auto r : kRecalls) out.push_back({p, l, r, c});
      }
    }
  }
  return out;
}

std::vector<PersonaSpec> enumerate_personas() {
  std::vector<PersonaSpec> out;
  out.reserve(37);
  for (auto p : kPersonalities) {
    for (auto l : kLanguages) {
      for (auto r : kRecalls) out.push_back({p, l, r, Confusion::normal});
    }
  }
  out.push_back({Personality::neutral, CefrLevel::B, Recall::high, Confusion::high});
  return out;
}

ValidationResult validate_persona(const PersonaSpec& s) {
  ValidationResult r;
  if (s.confusion == Confusion::high) {
    if (s.personality != Personality::neutral) {
      r.violations.push_back({"personality", "high confusion requires a neutral personality"});
    }
    if (s.language != CefrLevel::B) {
      r.violations.push_back({"language", "high confusion requires intermediate language proficiency"});
    }
    if (s.recall != Recall::high) {
      r.violations.push_back({"recall", "high confusion requires high recall"});
    }
  }
  return r;
}

int sent_limit(const PersonaSpec& s) {
  return s.personality == Personality::verbose ? kVerboseSentLimit : kDefaultSentLimit;
}

std::string_view dazed_phase_name(DazedPhase p) {
  switch (p) {
    case DazedPhase::high: return "high";
    case DazedPhase::moderate: return "moderate";
    case DazedPhase::normal: return "normal";
  }
  return "?";
}

ConfusionSchedule::ConfusionSchedule(std::vector<Phase> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) return;
  int expect = 1;
  for (std::size_t i = 0; i < phases_.size(); ++i) {
    const auto& ph = phases_[i];
    if (ph.first_turn != expect) throw ConfigError("confusion schedule has a gap or overlap at turn " + std::to_string(expect));
    if (i + 1 == phases_.size()) {
      if (ph.last_turn) throw ConfigError("last confusion phase must be open-ended");
    } else {
      if (!ph.last_turn || *ph.last_turn < ph.first_turn) throw ConfigError("confusion phase has an invalid range");
      expect = *ph.last_turn + 1;
    }
    if (i > 0 && static_cast<int>(ph.phase) <= static_cast<int>(phases_[i - 1].phase)) {
      throw ConfigError("confusion phases must run high, moderate, normal");
    }
  }
}

ConfusionSchedule ConfusionSchedule::from_json(const json& j) {
  std::vector<Phase> phases;
  for (auto& e : j) {
    Phase ph;
    const auto name = e.at("phase").get<std::string>();
    if (name == "high") ph.phase = DazedPhase::high;
    else if (name == "moderate") ph.phase = DazedPhase::moderate;
    else if (name == "normal") ph.phase = DazedPhase::normal;
    else throw ConfigError("unknown dazed phase '" + name + "'");
    ph.first_turn = e.at("first_turn").get<int>();
    if (auto it = e.find("last_turn"); it != e.end() && !it->is_null()) ph.last_turn = it->get<int>();
    phases.push_back(ph);
  }
  return ConfusionSchedule(std::move(phases));
}

DazedPhase ConfusionSchedule::phase_at(int patient_turn) const {
  for (auto& ph : phases_) {
    if (patient_turn >= ph.first_turn && (!ph.last_turn || patient_turn <= *ph.last_turn)) return ph.phase;
  }
  return DazedPhase::normal;
}

namespace {

std::string numbered(const json& items) {
  std::string out;
  int n = 1;
  for (auto& item : items) {
    out += "\n    " + std::to_string(n++) + ". " + item.get<std::string>();
  }
  return out;
}

std::string bulleted(const json& items) {
  std::string out;
  for (auto& item : items) out += "\n    - " + item.get<std::string>();
  return out;
}

const json& table_entry(const json& tables, const char* axis, std::string_view key) {
  auto& t = tables.at(axis);
  auto it = t.find(std::string(key));
  if (it == t.end()) throw TemplateError(std::string(axis), std::string("persona table has no entry for ") + axis + " '" + std::string(key) + "'");
  return *it;
}

}  // namespace

PersonaTables PersonaTables::load(const std::filesystem::path& path) {
  PersonaTables t;
  try {
    t.tables_ = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
  t.version_ = t.tables_.value("version", "");
  t.schedule_ = ConfusionSchedule::from_json(t.tables_.at("confusion_schedule"));
  return t;
}

const PersonaTables& PersonaTables::standard() {
  static std::mutex m;
  static std::map<std::filesystem::path, PersonaTables> cache;
  const auto path = asset_dir() / "persona" / "tables.json";
  std::lock_guard lock(m);
  auto it = cache.find(path);
  if (it == cache.end()) it = cache.emplace(path, load(path)).first;
  return it->second;
}

PersonaFragments PersonaTables::fragments(const PersonaSpec& s, const WordSample& w) const {
  if (w.level != s.language) {
    throw TemplateError("language", "word sample level " + std::string(cefr_name(w.level)) +
                                        " does not match persona language " +
                                        std::string(cefr_name(s.language)));
  }
  PersonaFragments f;
  f.personality_text = numbered(table_entry(tables_, "personality", personality_name(s.personality)).at("description"));

  const std::string lang_tmpl =
      table_entry(tables_, "language", cefr_name(s.language)).at("description").get<std::string>();
  Slots slots;
  auto add = [&](const char* name, const std::vector<std::string>& words) {
    if (words.empty()) throw TemplateError(name, std::string("word sample slot '") + name + "' is empty");
    slots[name] = join(words, ", ");
  };
  const auto needed = slot_names(lang_tmpl);
  if (needed.contains("understand_words")) add("understand_words", w.understand_words);
  if (needed.contains("misunderstand_words")) add("misunderstand_words", w.misunderstand_words);
  if (needed.contains("understand_med_words")) add("understand_med_words", w.understand_med_words);
  if (needed.contains("misunderstand_med_words")) add("misunderstand_med_words", w.misunderstand_med_words);
  f.language_text = render_slots(lang_tmpl, slots, "persona.language");

  f.recall_text = bulleted(table_entry(tables_, "recall", recall_name(s.recall)).at("description"));
  f.confusion_text = table_entry(tables_, "confusion", confusion_name(s.confusion)).at("description").get<std::string>();
  return f;
}

std::string PersonaTables::reminder(const PersonaSpec& s) const {
  auto clause = [&](const char* axis, std::string_view key) {
    return table_entry(tables_, axis, key).at("reminder").get<std::string>();
  };
  std::string out = "You are " + clause("personality", personality_name(s.personality));
  out += " You are " + clause("language", cefr_name(s.language));
  out += " " + capitalize_first(clause("recall", recall_name(s.recall)));
  std::string confusion = clause("confusion", confusion_name(s.confusion));
  // The normal clause is a bare predicate ("acts without confusion.").
  if (s.confusion == Confusion::normal) {
    out += " You act" + confusion.substr(confusion.find(' '));
  } else {
    out += " " + capitalize_first(confusion);
  }
  return out;
}

PersonaFragments persona_fragments(const PersonaSpec& s, const WordSample& w) {
  return PersonaTables::standard().fragments(s, w);
}

std::string build_reminder(const PersonaSpec& s) { return PersonaTables::standard().reminder(s); }

const ConfusionSchedule& default_confusion_schedule() { return PersonaTables::standard().schedule(); }

std::string render_persona_block(const PersonaFragments& f) {
  return "- Personality: " + f.personality_text + "\n- Language Proficiency: " + f.language_text +
         "\n- Medical History Recall Ability: " + f.recall_text + "\n- Dazedness level: " + f.confusion_text;
}

}  // namespace medsim
