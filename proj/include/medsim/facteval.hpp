#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/orchestrator.hpp"
#include "medsim/profile.hpp"

namespace medsim {

enum class SentenceCategory : std::uint8_t { politeness, emotion, inquiry, meta_information, information };
enum class NliLabel : std::int8_t { contradiction = -1, neutral = 0, entailment = 1 };
// Which rule flagged a sentence as unsupported.
enum class UnsupportedRule : std::uint8_t { no_link, all_neutral, judge };

std::string_view category_name(SentenceCategory c);
std::optional<SentenceCategory> parse_category(std::string_view s);
std::string_view nli_label_name(NliLabel l);
std::optional<NliLabel> parse_nli_label(std::string_view s);
std::string_view unsupported_rule_name(UnsupportedRule r);

// Linkage indicator vector, ordered like linkage_items().
using LinkVector = std::array<std::uint8_t, kLinkageCount>;

int link_count(const LinkVector& r);
std::vector<ItemKey> linked_keys(const LinkVector& r);

struct SentenceVerdict {
  std::string session_id;
  int turn_index = 0;
  int sentence_index = 0;
  std::string text;
  SentenceCategory category = SentenceCategory::information;
  LinkVector links{};
  std::map<ItemKey, NliLabel> nli;
  bool supported = false;
  bool unsupported = false;
  std::optional<UnsupportedRule> unsupported_rule;
  std::optional<int> plausibility;
  std::map<std::string, std::string> rationales;  // step name -> judge explanation
  std::vector<std::string> audit;

  // An information sentence with at least one entailment label.
  bool entailed() const;
  // Supported but with no entailment label.
  bool contradicted() const { return supported && !entailed(); }
};

nlohmann::json verdict_to_json(const SentenceVerdict& v);
SentenceVerdict verdict_from_json(const nlohmann::json& j);
ValidationResult validate_verdict(const SentenceVerdict& v);

// --- pipeline steps ------------------------------------------------------------

struct CategoryResult {
  SentenceCategory category;
  std::string explanation;
};
CategoryResult classify_sentence(const std::string& history, const std::string& sentence, JudgeClient& judge);

struct LinkResult {
  LinkVector links{};
  std::map<ItemKey, std::string> explanations;
  std::vector<std::string> audit;  // categories the judge left out
};
// Only information sentences may be linked; pass the category to enforce it.
LinkResult link_items(const std::string& history, const std::string& sentence, SentenceCategory category,
                      JudgeClient& judge);

struct NliResult {
  std::map<ItemKey, NliLabel> labels;
  std::map<ItemKey, std::string> explanations;
};
// One "Label: value" line per linked item; results map back by position.
NliResult nli_verdicts(const std::string& history, const std::string& sentence,
                       const std::vector<std::pair<ItemKey, std::string>>& linked_items, JudgeClient& judge);

struct UnsupportedResult {
  bool unsupported = false;
  std::optional<UnsupportedRule> rule;
  std::string explanation;
  bool judge_called = false;
};
// A sentence is unsupported when it links to nothing, when every NLI label is
// neutral, or when the judge finds new information. The first two rules need
// no judge call.
UnsupportedResult detect_unsupported(const std::string& history, const std::string& sentence, const LinkVector& links,
                                     const std::map<ItemKey, NliLabel>& nli, const std::string& profile_text,
                                     JudgeClient& judge);

struct PlausibilityResult {
  int score = 0;
  std::string explanation;
};
PlausibilityResult rate_plausibility(const std::string& history, const std::string& profile_text,
                                     const std::string& sentence, JudgeClient& judge);

// Profile text shown to the unsupported and plausibility judges.
std::string profile_context(const PatientProfile& p);
// Items with values, as "Label: value" lines for the NLI judge.
std::vector<std::pair<ItemKey, std::string>> linked_profile_items(const PatientProfile& p, const LinkVector& links);

// Runs every step over each patient sentence. History is the dialogue before
// the sentence's utterance.
std::vector<SentenceVerdict> evaluate_factuality(const Transcript& t, const PatientProfile& p, JudgeClient& judge,
                                                 std::size_t workers = 1);

// --- aggregation -----------------------------------------------------------------

struct FactualityCounts {
  long n_dialogues = 0;
  long n_sentences = 0;
  long n_info = 0;
  long n_supported = 0;
  long n_unsupported = 0;
  long n_entail = 0;
  long n_contradict = 0;
  long n_rated = 0;
  long plausibility_sum = 0;
};

struct FactualityRates {
  std::optional<double> info_share;         // info / sentences
  std::optional<double> supported_share;    // supported / info
  std::optional<double> unsupported_share;  // unsupported / info
  std::optional<double> entail_rate;        // entailed / supported
  std::optional<double> contradict_rate;    // contradicted / supported
  std::optional<double> entail_rate_info;   // entailed / info
  std::optional<double> contradict_rate_info;
  std::optional<double> mean_plausibility;
};

struct FactualitySummary {
  FactualityCounts counts;
  FactualityRates micro;  // pooled over all sentences
  FactualityRates macro;  // mean of per-dialogue rates, skipping undefined ones
};

FactualityCounts count_verdicts(const std::vector<SentenceVerdict>& verdicts);
FactualityRates factuality_rates(const FactualityCounts& c);
// Dialogues are identified by session_id.
FactualitySummary summarize_factuality(const std::vector<SentenceVerdict>& verdicts);
ValidationResult validate_summary(const FactualitySummary& s);
nlohmann::json factuality_to_json(const FactualitySummary& s);

void save_verdicts(const std::filesystem::path& path, const std::vector<SentenceVerdict>& verdicts);
std::vector<SentenceVerdict> load_verdicts(const std::filesystem::path& path);

}  // namespace medsim
