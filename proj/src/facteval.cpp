#include "medsim/facteval.hpp"

#include <cmath>
#include <set>

#include "medsim/error.hpp"
#include "medsim/support.hpp"

namespace medsim {

using nlohmann::json;

std::string_view category_name(SentenceCategory c) {
  switch (c) {
    case SentenceCategory::politeness: return "politeness";
    case SentenceCategory::emotion: return "emotion";
    case SentenceCategory::inquiry: return "inquiry";
    case SentenceCategory::meta_information: return "meta_information";
    case SentenceCategory::information: return "information";
  }
  return "?";
}

std::optional<SentenceCategory> parse_category(std::string_view s) {
  for (auto c : {SentenceCategory::politeness, SentenceCategory::emotion, SentenceCategory::inquiry,
                 SentenceCategory::meta_information, SentenceCategory::information}) {
    if (category_name(c) == s) return c;
  }
  return std::nullopt;
}

std::string_view nli_label_name(NliLabel l) {
  switch (l) {
    case NliLabel::entailment: return "entailment";
    case NliLabel::neutral: return "neutral";
    case NliLabel::contradiction: return "contradiction";
  }
  return "?";
}

std::optional<NliLabel> parse_nli_label(std::string_view s) {
  for (auto l : {NliLabel::entailment, NliLabel::neutral, NliLabel::contradiction}) {
    if (nli_label_name(l) == s) return l;
  }
  return std::nullopt;
}

std::string_view unsupported_rule_name(UnsupportedRule r) {
  switch (r) {
    case UnsupportedRule::no_link: return "no_link";
    case UnsupportedRule::all_neutral: return "all_neutral";
    case UnsupportedRule::judge: return "judge";
  }
  return "?";
}

int link_count(const LinkVector& r) {
  int n = 0;
  for (auto v : r) n += v;
  return n;
}

std::vector<ItemKey> linked_keys(const LinkVector& r) {
  std::vector<ItemKey> out;
  for (std::size_t k = 0; k < kLinkageCount; ++k) {
    if (r[k]) out.push_back(linkage_items()[k]);
  }
  return out;
}

namespace {

std::optional<std::size_t> link_index(ItemKey key) {
  for (std::size_t k = 0; k < kLinkageCount; ++k) {
    if (linkage_items()[k] == key) return k;
  }
  return std::nullopt;
}

ItemKey require_item(const std::string& name) {
  auto key = parse_item(name);
  if (!key) throw ParseError("verdict", "unknown item '" + name + "'");
  return *key;
}

}  // namespace

bool SentenceVerdict::entailed() const {
  if (!supported) return false;
  for (auto& [_, label] : nli) {
    if (label == NliLabel::entailment) return true;
  }
  return false;
}

json verdict_to_json(const SentenceVerdict& v) {
  json links = json::array();
  for (auto key : linked_keys(v.links)) links.push_back(item_name(key));
  json nli = json::object();
  for (auto& [key, label] : v.nli) nli[std::string(item_name(key))] = nli_label_name(label);
  return {{"session_id", v.session_id},
          {"turn_index", v.turn_index},
          {"sentence_index", v.sentence_index},
          {"text", v.text},
          {"category", category_name(v.category)},
          {"links", links},
          {"nli", nli},
          {"supported", v.supported},
          {"unsupported", v.unsupported},
          {"unsupported_rule", v.unsupported_rule ? json(unsupported_rule_name(*v.unsupported_rule)) : json(nullptr)},
          {"plausibility", v.plausibility ? json(*v.plausibility) : json(nullptr)},
          {"rationales", v.rationales},
          {"audit", v.audit}};
}

SentenceVerdict verdict_from_json(const json& j) {
  try {
    SentenceVerdict v;
    v.session_id = j.at("session_id").get<std::string>();
    v.turn_index = j.at("turn_index").get<int>();
    v.sentence_index = j.at("sentence_index").get<int>();
    v.text = j.at("text").get<std::string>();
    const auto cat = j.at("category").get<std::string>();
    auto parsed = parse_category(cat);
    if (!parsed) throw ParseError("verdict", "unknown category '" + cat + "'");
    v.category = *parsed;
    for (auto& name : j.at("links")) {
      auto idx = link_index(require_item(name.get<std::string>()));
      if (!idx) throw ParseError("verdict", "item '" + name.get<std::string>() + "' is not a linkage category");
      v.links[*idx] = 1;
    }
    for (auto& [name, label] : j.at("nli").items()) {
      auto l = parse_nli_label(label.get<std::string>());
      if (!l) throw ParseError("verdict", "unknown NLI label '" + label.get<std::string>() + "'");
      v.nli[require_item(name)] = *l;
    }
    v.supported = j.at("supported").get<bool>();
    v.unsupported = j.at("unsupported").get<bool>();
    if (auto& r = j.at("unsupported_rule"); !r.is_null()) {
      const auto name = r.get<std::string>();
      for (auto rule : {UnsupportedRule::no_link, UnsupportedRule::all_neutral, UnsupportedRule::judge}) {
        if (unsupported_rule_name(rule) == name) v.unsupported_rule = rule;
      }
      if (!v.unsupported_rule) throw ParseError("verdict", "unknown unsupported rule '" + name + "'");
    }
    if (auto& p = j.at("plausibility"); !p.is_null()) v.plausibility = p.get<int>();
    v.rationales = j.at("rationales").get<std::map<std::string, std::string>>();
    v.audit = j.at("audit").get<std::vector<std::string>>();
    return v;
  } catch (const json::exception& e) {
    throw ParseError("verdict", e.what());
  }
}

ValidationResult validate_verdict(const SentenceVerdict& v) {
  ValidationResult r;
  auto add = [&](const char* path, const char* msg) { r.violations.push_back({path, msg}); };
  for (auto& [key, _] : v.nli) {
    auto idx = link_index(key);
    if (!idx || !v.links[*idx]) add("nli", "NLI label for an unlinked item");
  }
  bool has_non_neutral = false;
  for (auto& [_, label] : v.nli) has_non_neutral = has_non_neutral || label != NliLabel::neutral;
  if (v.supported && (v.category != SentenceCategory::information || !has_non_neutral)) {
    add("supported", "supported requires an information sentence with a non-neutral NLI label");
  }
  if (v.unsupported && v.category != SentenceCategory::information) {
    add("unsupported", "only information sentences can be unsupported");
  }
  if (v.unsupported != v.unsupported_rule.has_value()) add("unsupported_rule", "rule present iff unsupported");
  if (v.plausibility.has_value() != v.unsupported) add("plausibility", "plausibility present iff unsupported");
  if (v.plausibility && (*v.plausibility < 1 || *v.plausibility > 4)) add("plausibility", "outside 1..4");
  return r;
}

// --- steps -----------------------------------------------------------------------

CategoryResult classify_sentence(const std::string& history, const std::string& sentence, JudgeClient& judge) {
  auto out = judge.ask(build_judge_prompt(JudgeKind::sentence_class, {{"history", history}, {"sentence", sentence}}));
  return {*parse_category(out.at("prediction").get<std::string>()), out.at("explanation").get<std::string>()};
}

LinkResult link_items(const std::string& history, const std::string& sentence, SentenceCategory category,
                      JudgeClient& judge) {
  if (category != SentenceCategory::information) {
    throw PreconditionError("item linkage applies to information sentences, got " + std::string(category_name(category)));
  }
  std::vector<std::string> names;
  for (auto key : linkage_items()) names.emplace_back(item_name(key));
  auto out = judge.ask(build_judge_prompt(
      JudgeKind::item_link, {{"history", history}, {"sentence", sentence}, {"categories", join(names, "\n")}}));
  LinkResult r;
  std::array<bool, kLinkageCount> seen{};
  for (auto& e : out) {
    const auto key = *parse_item(e.at("category").get<std::string>());
    const auto idx = *link_index(key);
    seen[idx] = true;
    r.links[idx] = static_cast<std::uint8_t>(e.at("prediction").get<int>());
    r.explanations[key] = e.at("explanation").get<std::string>();
  }
  for (std::size_t k = 0; k < kLinkageCount; ++k) {
    if (!seen[k]) r.audit.push_back("item_link: no answer for '" + std::string(item_name(linkage_items()[k])) + "', treated as 0");
  }
  return r;
}

NliResult nli_verdicts(const std::string& history, const std::string& sentence,
                       const std::vector<std::pair<ItemKey, std::string>>& linked_items, JudgeClient& judge) {
  if (linked_items.empty()) throw PreconditionError("NLI needs at least one linked item");
  std::vector<std::string> lines;
  for (auto& [key, value] : linked_items) lines.push_back(std::string(item_label(key)) + ": " + value);
  auto prompt = build_judge_prompt(JudgeKind::nli,
                                   {{"history", history}, {"sentence", sentence}, {"profile_items", join(lines, "\n")}});
  auto out = judge.ask(prompt);
  if (out.size() != linked_items.size()) {
    throw JudgeFormatError("NLI answer has " + std::to_string(out.size()) + " entries for " +
                               std::to_string(linked_items.size()) + " profile items",
                           out.dump());
  }
  NliResult r;
  for (std::size_t i = 0; i < linked_items.size(); ++i) {
    const auto key = linked_items[i].first;
    r.labels[key] = static_cast<NliLabel>(out[i].at("entailment_prediction").get<int>());
    r.explanations[key] = out[i].at("explanation").get<std::string>();
  }
  return r;
}

UnsupportedResult detect_unsupported(const std::string& history, const std::string& sentence, const LinkVector& links,
                                     const std::map<ItemKey, NliLabel>& nli, const std::string& profile_text,
                                     JudgeClient& judge) {
  UnsupportedResult r;
  if (link_count(links) == 0) {
    r.unsupported = true;
    r.rule = UnsupportedRule::no_link;
    r.explanation = "no profile item is linked to the sentence";
    return r;
  }
  bool all_neutral = true;
  for (auto& [_, label] : nli) all_neutral = all_neutral && label == NliLabel::neutral;
  if (all_neutral) {
    r.unsupported = true;
    r.rule = UnsupportedRule::all_neutral;
    r.explanation = "every linked item is neutral to the sentence";
    return r;
  }
  auto out = judge.ask(build_judge_prompt(JudgeKind::unsupported,
                                          {{"profile", profile_text}, {"history", history}, {"sentence", sentence}}));
  r.judge_called = true;
  r.explanation = out.at("explanation").get<std::string>();
  if (out.at("prediction").get<int>() == 1) {
    r.unsupported = true;
    r.rule = UnsupportedRule::judge;
  }
  return r;
}

PlausibilityResult rate_plausibility(const std::string& history, const std::string& profile_text,
                                     const std::string& sentence, JudgeClient& judge) {
  auto out = judge.ask(build_judge_prompt(JudgeKind::plausibility,
                                          {{"profile", profile_text}, {"history", history}, {"sentence", sentence}}));
  return {out.at("likelihood_rating").get<int>(), out.at("explanation").get<std::string>()};
}

std::string profile_context(const PatientProfile& p) {
  auto s = render_profile_sections(p);
  return s.background + "\n" + s.current_visit;
}

std::vector<std::pair<ItemKey, std::string>> linked_profile_items(const PatientProfile& p, const LinkVector& links) {
  std::vector<std::pair<ItemKey, std::string>> out;
  for (auto key : linked_keys(links)) out.emplace_back(key, display(item_text(p, key)));
  return out;
}

std::vector<SentenceVerdict> evaluate_factuality(const Transcript& t, const PatientProfile& p, JudgeClient& judge,
                                                 std::size_t workers) {
  struct Task {
    const Turn* turn;
    const Sentence* sentence;
  };
  std::vector<Task> tasks;
  for (auto& turn : t.turns) {
    if (turn.role != Speaker::patient) continue;
    for (auto& s : turn.sentences) tasks.push_back({&turn, &s});
  }
  const std::string context = profile_context(p);
  std::vector<SentenceVerdict> out(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const auto& [turn, s] = tasks[i];
    const std::string history = render_history(t, static_cast<std::size_t>(turn->turn_index));
    SentenceVerdict v;
    v.session_id = t.session_id;
    v.turn_index = turn->turn_index;
    v.sentence_index = s->index;
    v.text = s->text;
    auto cat = classify_sentence(history, s->text, judge);
    v.category = cat.category;
    v.rationales["sentence_class"] = cat.explanation;
    if (v.category == SentenceCategory::information) {
      auto link = link_items(history, s->text, v.category, judge);
      v.links = link.links;
      v.audit = link.audit;
      if (link_count(v.links) > 0) {
        auto nli = nli_verdicts(history, s->text, linked_profile_items(p, v.links), judge);
        v.nli = nli.labels;
        for (auto& [key, why] : nli.explanations) v.rationales["nli." + std::string(item_name(key))] = why;
      }
      for (auto& [_, label] : v.nli) v.supported = v.supported || label != NliLabel::neutral;
      auto un = detect_unsupported(history, s->text, v.links, v.nli, context, judge);
      v.unsupported = un.unsupported;
      v.unsupported_rule = un.rule;
      v.rationales["unsupported"] = un.explanation;
      if (v.unsupported) {
        auto pl = rate_plausibility(history, context, s->text, judge);
        v.plausibility = pl.score;
        v.rationales["plausibility"] = pl.explanation;
      }
    }
    out[i] = std::move(v);
  });
  return out;
}

// --- aggregation -------------------------------------------------------------------

FactualityCounts count_verdicts(const std::vector<SentenceVerdict>& verdicts) {
  FactualityCounts c;
  std::set<std::string> sessions;
  for (auto& v : verdicts) {
    sessions.insert(v.session_id);
    ++c.n_sentences;
    if (v.category != SentenceCategory::information) continue;
    ++c.n_info;
    c.n_supported += v.supported;
    c.n_unsupported += v.unsupported;
    c.n_entail += v.entailed();
    c.n_contradict += v.contradicted();
    if (v.plausibility) {
      ++c.n_rated;
      c.plausibility_sum += *v.plausibility;
    }
  }
  c.n_dialogues = static_cast<long>(sessions.size());
  return c;
}

FactualityRates factuality_rates(const FactualityCounts& c) {
  auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  FactualityRates r;
  r.info_share = ratio(c.n_info, c.n_sentences);
  r.supported_share = ratio(c.n_supported, c.n_info);
  r.unsupported_share = ratio(c.n_unsupported, c.n_info);
  r.entail_rate = ratio(c.n_entail, c.n_supported);
  r.contradict_rate = ratio(c.n_contradict, c.n_supported);
  r.entail_rate_info = ratio(c.n_entail, c.n_info);
  r.contradict_rate_info = ratio(c.n_contradict, c.n_info);
  r.mean_plausibility = ratio(c.plausibility_sum, c.n_rated);
  return r;
}

FactualitySummary summarize_factuality(const std::vector<SentenceVerdict>& verdicts) {
  FactualitySummary s;
  s.counts = count_verdicts(verdicts);
  s.micro = factuality_rates(s.counts);

  std::map<std::string, std::vector<SentenceVerdict>> by_session;
  for (auto& v : verdicts) by_session[v.session_id].push_back(v);
  using Member = std::optional<double> FactualityRates::*;
  constexpr Member members[] = {&FactualityRates::info_share,       &FactualityRates::supported_share,
                                &FactualityRates::unsupported_share, &FactualityRates::entail_rate,
                                &FactualityRates::contradict_rate,   &FactualityRates::entail_rate_info,
                                &FactualityRates::contradict_rate_info, &FactualityRates::mean_plausibility};
  std::vector<FactualityRates> per_dialogue;
  for (auto& [_, vs] : by_session) per_dialogue.push_back(factuality_rates(count_verdicts(vs)));
  for (auto m : members) {
    double sum = 0.0;
    int n = 0;
    for (auto& r : per_dialogue) {
      if (r.*m) {
        sum += *(r.*m);
        ++n;
      }
    }
    if (n > 0) s.macro.*m = sum / n;
  }
  return s;
}

ValidationResult validate_summary(const FactualitySummary& s) {
  ValidationResult r;
  auto add = [&](const char* path, const char* msg) { r.violations.push_back({path, msg}); };
  const auto& c = s.counts;
  if (c.n_info > c.n_sentences) add("counts.n_info", "exceeds n_sentences");
  if (c.n_supported > c.n_info) add("counts.n_supported", "exceeds n_info");
  if (c.n_unsupported > c.n_info) add("counts.n_unsupported", "exceeds n_info");
  if (c.n_entail + c.n_contradict > c.n_supported) add("counts", "n_entail + n_contradict exceeds n_supported");
  if (c.n_rated != c.n_unsupported) add("counts.n_rated", "every unsupported sentence carries a plausibility rating");
  for (auto* rates : {&s.micro, &s.macro}) {
    for (auto v : {rates->info_share, rates->supported_share, rates->unsupported_share, rates->entail_rate,
                   rates->contradict_rate, rates->entail_rate_info, rates->contradict_rate_info}) {
      if (v && (*v < 0.0 || *v > 1.0)) add("rates", "rate outside [0, 1]");
    }
    if (rates->mean_plausibility && (*rates->mean_plausibility < 1.0 || *rates->mean_plausibility > 4.0)) {
      add("rates.mean_plausibility", "outside [1, 4]");
    }
  }
  if (s.micro.entail_rate.has_value() != (c.n_supported > 0)) add("micro.entail_rate", "present iff supported > 0");
  if (s.micro.entail_rate && std::abs(*s.micro.entail_rate + *s.micro.contradict_rate - 1.0) > 1e-12) {
    add("micro", "entail_rate + contradict_rate must equal 1");
  }
  return r;
}

json factuality_to_json(const FactualitySummary& s) {
  auto num = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  auto rates = [&](const FactualityRates& r) {
    return json{{"info_share", num(r.info_share)},
                {"supported_share", num(r.supported_share)},
                {"unsupported_share", num(r.unsupported_share)},
                {"entail_rate", num(r.entail_rate)},
                {"contradict_rate", num(r.contradict_rate)},
                {"entail_rate_info", num(r.entail_rate_info)},
                {"contradict_rate_info", num(r.contradict_rate_info)},
                {"mean_plausibility", num(r.mean_plausibility)}};
  };
  const auto& c = s.counts;
  return {{"counts",
           {{"n_dialogues", c.n_dialogues},
            {"n_sentences", c.n_sentences},
            {"n_info", c.n_info},
            {"n_supported", c.n_supported},
            {"n_unsupported", c.n_unsupported},
            {"n_entail", c.n_entail},
            {"n_contradict", c.n_contradict},
            {"n_rated", c.n_rated}}},
          {"micro", rates(s.micro)},
          {"macro", rates(s.macro)}};
}

void save_verdicts(const std::filesystem::path& path, const std::vector<SentenceVerdict>& verdicts) {
  std::string out;
  for (auto& v : verdicts) out += verdict_to_json(v).dump() + "\n";
  write_text_file(path, out);
}

std::vector<SentenceVerdict> load_verdicts(const std::filesystem::path& path) {
  std::vector<SentenceVerdict> out;
  const auto lines = split_lines(read_text_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(verdict_from_json(json::parse(lines[i])));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(i + 1), e.what());
    }
  }
  return out;
}

}  // namespace medsim
