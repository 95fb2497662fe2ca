#include "medsim/promptkit.hpp"

#include <mutex>
#include <set>

#include <json.hpp>

#include "medsim/error.hpp"
#include "medsim/support.hpp"

namespace medsim {

using nlohmann::json;

TemplateStore TemplateStore::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ParseError(manifest_path.string(), e.what());
  }
  TemplateStore store;
  store.version_ = manifest.at("version").get<std::string>();
  for (auto& [id, spec] : manifest.at("templates").items()) {
    Entry e;
    if (auto it = spec.find("system"); it != spec.end()) e.system = read_text_file(dir / it->get<std::string>());
    e.user = read_text_file(dir / spec.at("user").get<std::string>());
    // Files end with a newline; prompts do not.
    while (!e.system.empty() && e.system.back() == '\n') e.system.pop_back();
    while (!e.user.empty() && e.user.back() == '\n') e.user.pop_back();

    std::set<std::string> declared;
    for (auto& s : spec.at("slots")) declared.insert(s.get<std::string>());
    auto actual = slot_names(e.system);
    auto user_slots = slot_names(e.user);
    actual.insert(user_slots.begin(), user_slots.end());
    if (declared != actual) {
      for (auto& s : actual) {
        if (!declared.contains(s)) throw TemplateError(s, "template '" + id + "' uses undeclared slot '" + s + "'");
      }
      for (auto& s : declared) {
        if (!actual.contains(s)) throw TemplateError(s, "template '" + id + "' declares unused slot '" + s + "'");
      }
    }
    store.entries_.emplace(id, std::move(e));
  }
  return store;
}

const TemplateStore& TemplateStore::standard() {
  static std::mutex m;
  static std::map<std::filesystem::path, TemplateStore> cache;
  const auto dir = asset_dir() / "templates";
  std::lock_guard lock(m);
  auto it = cache.find(dir);
  if (it == cache.end()) it = cache.emplace(dir, load(dir)).first;
  return it->second;
}

const TemplateStore::Entry& TemplateStore::entry(std::string_view id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw TemplateError(std::string(id), "unknown template '" + std::string(id) + "'");
  return it->second;
}

bool TemplateStore::contains(std::string_view id) const { return entries_.find(id) != entries_.end(); }
bool TemplateStore::has_system(std::string_view id) const { return !entry(id).system.empty(); }

std::string TemplateStore::render_system(std::string_view id, const Slots& slots) const {
  return render_slots(entry(id).system, slots, id);
}

std::string TemplateStore::render_user(std::string_view id, const Slots& slots) const {
  return render_slots(entry(id).user, slots, id);
}

PromptContext make_prompt_context(const PatientProfile& p, const PersonaSpec& s, const WordSample& w,
                                  int total_idx, int top_k) {
  PromptContext ctx;
  ctx.sections = render_profile_sections(p);
  ctx.fragments = persona_fragments(s, w);
  ctx.reminder = build_reminder(s);
  ctx.sent_limit = sent_limit(s);
  ctx.total_idx = total_idx;
  ctx.curr_idx = 1;
  ctx.top_k_diagnosis = top_k;
  ctx.gender = p.gender;
  ctx.age = std::to_string(p.age);
  ctx.arrival_transport = p.arrival_transport;
  return ctx;
}

std::string build_patient_prompt(const PromptContext& ctx) {
  const auto& store = TemplateStore::standard();
  const std::string limit = std::to_string(ctx.sent_limit);
  Slots slots{{"background", ctx.sections.background},
              {"current_visit", ctx.sections.current_visit},
              {"personality", ctx.fragments.personality_text},
              {"cefr", ctx.fragments.language_text},
              {"memory_recall_level", ctx.fragments.recall_text},
              {"dazed_level", ctx.fragments.confusion_text},
              {"behavioral_guideline", store.render_user("behavioral_guideline", {{"sent_limit", limit}})},
              {"reminder", ctx.reminder},
              {"sent_limit", limit}};
  for (auto& [name, value] : slots) {
    if (value.empty()) throw TemplateError(name, "slot '" + name + "' is empty in template 'patient'");
  }
  return store.render_user("patient", slots);
}

std::string build_doctor_prompt(const PromptContext& ctx, bool final_round) {
  if (ctx.total_idx < 1) throw PreconditionError("total_idx must be at least 1");
  if (ctx.top_k_diagnosis < 1) throw PreconditionError("top_k_diagnosis must be at least 1");
  int curr = ctx.curr_idx;
  if (final_round) curr = std::min(curr, ctx.total_idx);
  if (curr < 1 || curr > ctx.total_idx) {
    throw PreconditionError("curr_idx " + std::to_string(ctx.curr_idx) + " outside 1.." + std::to_string(ctx.total_idx));
  }
  const auto& store = TemplateStore::standard();
  Slots slots{{"total_idx", std::to_string(ctx.total_idx)},
              {"top_k_diagnosis", std::to_string(ctx.top_k_diagnosis)},
              {"gender", ctx.gender},
              {"age", ctx.age},
              {"arrival_transport", ctx.arrival_transport},
              {"curr_idx", std::to_string(curr)},
              {"remain_idx", std::to_string(ctx.total_idx - curr)}};
  for (const char* basic : {"gender", "age", "arrival_transport"}) {
    if (slots[basic].empty()) throw TemplateError(basic, std::string("doctor prompt is missing '") + basic + "'");
  }
  std::string out = store.render_user("doctor", slots);
  if (final_round) {
    out += "\n";
    out += store.render_user("doctor_final", {{"top_k_diagnosis", slots["top_k_diagnosis"]}});
  }
  return out;
}

std::string_view judge_kind_name(JudgeKind k) {
  switch (k) {
    case JudgeKind::fidelity: return "fidelity";
    case JudgeKind::sentence_class: return "sentence_class";
    case JudgeKind::item_link: return "item_link";
    case JudgeKind::nli: return "nli";
    case JudgeKind::unsupported: return "unsupported";
    case JudgeKind::plausibility: return "plausibility";
    case JudgeKind::profile_extract: return "profile_extract";
    case JudgeKind::consistency: return "consistency";
    case JudgeKind::ddx: return "ddx";
    case JudgeKind::note_extract: return "note_extract";
    case JudgeKind::note_filter: return "note_filter";
    case JudgeKind::note_impute: return "note_impute";
  }
  return "?";
}

std::optional<JudgeKind> parse_judge_kind(std::string_view s) {
  for (auto k : kJudgeKinds) {
    if (judge_kind_name(k) == s) return k;
  }
  return std::nullopt;
}

JudgePrompt build_judge_prompt(JudgeKind kind, const Slots& payload) {
  const auto& store = TemplateStore::standard();
  const std::string id(judge_kind_name(kind));
  JudgePrompt p;
  p.kind = kind;
  if (store.has_system(id)) p.system = store.render_system(id, payload);
  p.user = store.render_user(id, payload);
  p.vars = payload;
  p.vars["kind"] = id;
  return p;
}

std::string build_repair_prompt(std::string_view error, std::string_view schema) {
  return TemplateStore::standard().render_user("format_repair",
                                               {{"error", std::string(error)}, {"schema", std::string(schema)}});
}

}  // namespace medsim
