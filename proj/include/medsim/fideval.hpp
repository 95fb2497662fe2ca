#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/orchestrator.hpp"
#include "medsim/persona.hpp"

namespace medsim {

enum class Criterion : std::uint8_t { personality, language, recall, confusion, realism, education_value };

inline constexpr std::array<Criterion, 6> kCriteria{Criterion::personality, Criterion::language,
                                                    Criterion::recall,      Criterion::confusion,
                                                    Criterion::realism,     Criterion::education_value};

std::string_view criterion_name(Criterion c);
std::optional<Criterion> parse_criterion(std::string_view s);

// Judge-scored criteria for a persona. Educational value is left to human
// raters and never appears here.
std::vector<Criterion> applicability(const PersonaSpec& persona);

// Criterion statements and four score descriptions, from rubrics/fidelity.json.
class FidelityRubric {
 public:
  static FidelityRubric load(const std::filesystem::path& path);
  static const FidelityRubric& standard();

  const std::string& version() const { return version_; }
  std::string label(Criterion c) const;
  std::string statement(Criterion c) const;
  std::string score_description(Criterion c, int score) const;

 private:
  std::string version_;
  nlohmann::json rubric_;
};

enum class ScoreSource : std::uint8_t { judge, human };

struct FidelityScore {
  std::string session_id;
  Criterion criterion = Criterion::realism;
  bool applicable = true;
  std::optional<int> score;  // present iff applicable
  std::string reason;
  ScoreSource source = ScoreSource::judge;
  std::string rater;  // human scores only
};

nlohmann::json fidelity_score_to_json(const FidelityScore& s);
FidelityScore fidelity_score_from_json(const nlohmann::json& j);

JudgePrompt fidelity_prompt(const Transcript& t, Criterion criterion, const FidelityRubric& rubric);
FidelityScore judge_fidelity(const Transcript& t, const PersonaSpec& persona, Criterion criterion,
                             const FidelityRubric& rubric, JudgeClient& judge);
// One score per applicable criterion.
std::vector<FidelityScore> judge_transcript_fidelity(const Transcript& t, const FidelityRubric& rubric,
                                                     JudgeClient& judge);

struct CriterionSummary {
  int n = 0;
  double mean = 0.0;
};
std::map<Criterion, CriterionSummary> summarize_fidelity(const std::vector<FidelityScore>& scores);
nlohmann::json fidelity_summary_to_json(const std::map<Criterion, CriterionSummary>& s);

}  // namespace medsim
