#include "medsim/fideval.hpp"

#include <algorithm>
#include <mutex>

#include "medsim/error.hpp"
#include "medsim/support.hpp"

namespace medsim {

using nlohmann::json;

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::personality: return "personality";
    case Criterion::language: return "language";
    case Criterion::recall: return "recall";
    case Criterion::confusion: return "confusion";
    case Criterion::realism: return "realism";
    case Criterion::education_value: return "education_value";
  }
  return "?";
}

std::optional<Criterion> parse_criterion(std::string_view s) {
  for (auto c : kCriteria) {
    if (criterion_name(c) == s) return c;
  }
  return std::nullopt;
}

std::vector<Criterion> applicability(const PersonaSpec& persona) {
  if (persona.confusion == Confusion::high) return {Criterion::confusion, Criterion::realism};
  return {Criterion::personality, Criterion::language, Criterion::recall, Criterion::realism};
}

FidelityRubric FidelityRubric::load(const std::filesystem::path& path) {
  FidelityRubric r;
  try {
    r.rubric_ = json::parse(read_text_file(path));
    r.version_ = r.rubric_.at("version").get<std::string>();
    for (int s = 1; s <= 4; ++s) r.rubric_.at("scores").at(std::to_string(s)).get<std::string>();
    for (auto c : kCriteria) {
      const auto& entry = r.rubric_.at("criteria").at(std::string(criterion_name(c)));
      entry.at("label").get<std::string>();
      entry.at("statement").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string(), e.what());
  }
  return r;
}

const FidelityRubric& FidelityRubric::standard() {
  static std::mutex m;
  static std::map<std::filesystem::path, FidelityRubric> cache;
  const auto path = asset_dir() / "rubrics" / "fidelity.json";
  std::lock_guard lock(m);
  auto it = cache.find(path);
  if (it == cache.end()) it = cache.emplace(path, load(path)).first;
  return it->second;
}

std::string FidelityRubric::label(Criterion c) const {
  return rubric_.at("criteria").at(std::string(criterion_name(c))).at("label").get<std::string>();
}

std::string FidelityRubric::statement(Criterion c) const {
  return rubric_.at("criteria").at(std::string(criterion_name(c))).at("statement").get<std::string>();
}

std::string FidelityRubric::score_description(Criterion c, int score) const {
  if (score < 1 || score > 4) throw PreconditionError("rubric scores run from 1 to 4");
  return render_slots(rubric_.at("scores").at(std::to_string(score)).get<std::string>(), {{"statement", statement(c)}},
                      "fidelity rubric");
}

json fidelity_score_to_json(const FidelityScore& s) {
  return {{"session_id", s.session_id},
          {"criterion", criterion_name(s.criterion)},
          {"applicable", s.applicable},
          {"score", s.score ? json(*s.score) : json(nullptr)},
          {"reason", s.reason},
          {"source", s.source == ScoreSource::judge ? "judge" : "human"},
          {"rater", s.rater}};
}

FidelityScore fidelity_score_from_json(const json& j) {
  try {
    FidelityScore s;
    s.session_id = j.at("session_id").get<std::string>();
    const auto name = j.at("criterion").get<std::string>();
    auto c = parse_criterion(name);
    if (!c) throw ParseError("fidelity score", "unknown criterion '" + name + "'");
    s.criterion = *c;
    s.applicable = j.at("applicable").get<bool>();
    if (!j.at("score").is_null()) s.score = j.at("score").get<int>();
    s.reason = j.at("reason").get<std::string>();
    const auto source = j.at("source").get<std::string>();
    if (source != "judge" && source != "human") throw ParseError("fidelity score", "unknown source '" + source + "'");
    s.source = source == "judge" ? ScoreSource::judge : ScoreSource::human;
    s.rater = j.value("rater", "");
    return s;
  } catch (const json::exception& e) {
    throw ParseError("fidelity score", e.what());
  }
}

JudgePrompt fidelity_prompt(const Transcript& t, Criterion criterion, const FidelityRubric& rubric) {
  Slots slots{{"conversation", render_history(t)},
              {"persona", render_persona_block(persona_fragments(t.persona, t.words))},
              {"criteria", rubric.label(criterion) + ": " + rubric.statement(criterion)},
              {"criterion", std::string(criterion_name(criterion))},
              {"persona_code", persona_code(t.persona)}};
  for (int s = 1; s <= 4; ++s) {
    slots["score" + std::to_string(s) + "_description"] = rubric.score_description(criterion, s);
  }
  return build_judge_prompt(JudgeKind::fidelity, slots);
}

FidelityScore judge_fidelity(const Transcript& t, const PersonaSpec& persona, Criterion criterion,
                             const FidelityRubric& rubric, JudgeClient& judge) {
  const auto applicable = applicability(persona);
  if (std::find(applicable.begin(), applicable.end(), criterion) == applicable.end()) {
    throw PreconditionError("criterion '" + std::string(criterion_name(criterion)) + "' does not apply to persona " +
                            persona_code(persona));
  }
  auto out = judge.ask(fidelity_prompt(t, criterion, rubric));
  FidelityScore s;
  s.session_id = t.session_id;
  s.criterion = criterion;
  s.score = out.at("score").get<int>();
  s.reason = out.at("reason").get<std::string>();
  return s;
}

std::vector<FidelityScore> judge_transcript_fidelity(const Transcript& t, const FidelityRubric& rubric,
                                                     JudgeClient& judge) {
  std::vector<FidelityScore> out;
  for (auto c : applicability(t.persona)) out.push_back(judge_fidelity(t, t.persona, c, rubric, judge));
  return out;
}

std::map<Criterion, CriterionSummary> summarize_fidelity(const std::vector<FidelityScore>& scores) {
  std::map<Criterion, CriterionSummary> out;
  std::map<Criterion, long> sums;
  for (auto& s : scores) {
    if (!s.applicable || !s.score) continue;
    ++out[s.criterion].n;
    sums[s.criterion] += *s.score;
  }
  for (auto& [c, summary] : out) summary.mean = static_cast<double>(sums[c]) / summary.n;
  return out;
}

json fidelity_summary_to_json(const std::map<Criterion, CriterionSummary>& s) {
  json out = json::object();
  for (auto& [c, summary] : s) out[std::string(criterion_name(c))] = {{"n", summary.n}, {"mean", summary.mean}};
  return out;
}

}  // namespace medsim
