#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsim/profile.hpp"

namespace medsim {

enum class Personality : std::uint8_t {
  neutral,
  distrustful,
  impatient,
  overanxious,
  overly_positive,
  verbose,
};

enum class Recall : std::uint8_t { high, low };
enum class Confusion : std::uint8_t { normal, high };

inline constexpr std::array<Personality, 6> kPersonalities{
    Personality::neutral,     Personality::distrustful,     Personality::impatient,
    Personality::overanxious, Personality::overly_positive, Personality::verbose};
inline constexpr std::array<CefrLevel, 3> kLanguages{CefrLevel::A, CefrLevel::B, CefrLevel::C};
inline constexpr std::array<Recall, 2> kRecalls{Recall::high, Recall::low};
inline constexpr std::array<Confusion, 2> kConfusions{Confusion::normal, Confusion::high};

std::string_view personality_name(Personality p);
std::string_view recall_name(Recall r);
std::string_view confusion_name(Confusion c);
std::optional<Personality> parse_personality(std::string_view s);
std::optional<Recall> parse_recall(std::string_view s);
std::optional<Confusion> parse_confusion(std::string_view s);

struct PersonaSpec {
  Personality personality = Personality::neutral;
  CefrLevel language = CefrLevel::B;
  Recall recall = Recall::high;
  Confusion confusion = Confusion::normal;
  friend bool operator==(const PersonaSpec&, const PersonaSpec&) = default;
};

// "verbose-A-low-normal"
std::string persona_code(const PersonaSpec& s);
std::optional<PersonaSpec> parse_persona_code(std::string_view code);
nlohmann::json persona_to_json(const PersonaSpec& s);
// Accepts either a code string or a {personality, language, recall, confusion}
// object. Raises ParseError on unknown values; does not check the constraint.
PersonaSpec persona_from_json(const nlohmann::json& j);

// The 37 valid personas: 36 normal-confusion combinations, then the single
// high-confusion persona.
std::vector<PersonaSpec> enumerate_personas();
// Every axis combination, valid or not (6 x 3 x 2 x 2 = 72).
std::vector<PersonaSpec> persona_product();
ValidationResult validate_persona(const PersonaSpec& s);

inline constexpr int kDefaultSentLimit = 3;
inline constexpr int kVerboseSentLimit = 8;
int sent_limit(const PersonaSpec& s);

enum class DazedPhase : std::uint8_t { high, moderate, normal };
std::string_view dazed_phase_name(DazedPhase p);

// Maps 1-based patient turn numbers to a dazedness phase.
class ConfusionSchedule {
 public:
  struct Phase {
    DazedPhase phase;
    int first_turn;
    std::optional<int> last_turn;  // open-ended when absent
  };

  explicit ConfusionSchedule(std::vector<Phase> phases);
  static ConfusionSchedule from_json(const nlohmann::json& j);

  DazedPhase phase_at(int patient_turn) const;
  const std::vector<Phase>& phases() const { return phases_; }

 private:
  std::vector<Phase> phases_;
};

struct PersonaFragments {
  std::string personality_text;
  std::string language_text;
  std::string recall_text;
  std::string confusion_text;
};

// Per-axis descriptions and reminder clauses, loaded from persona/tables.json.
class PersonaTables {
 public:
  static PersonaTables load(const std::filesystem::path& path);
  // Tables under the current asset directory, loaded once per directory.
  static const PersonaTables& standard();

  const std::string& version() const { return version_; }
  PersonaFragments fragments(const PersonaSpec& s, const WordSample& w) const;
  std::string reminder(const PersonaSpec& s) const;
  const ConfusionSchedule& schedule() const { return schedule_; }

 private:
  PersonaTables() : schedule_({}) {}

  std::string version_;
  nlohmann::json tables_;
  ConfusionSchedule schedule_;
};

PersonaFragments persona_fragments(const PersonaSpec& s, const WordSample& w);
std::string build_reminder(const PersonaSpec& s);
const ConfusionSchedule& default_confusion_schedule();

// The four-line persona section shown to the patient model and the fidelity
// judge.
std::string render_persona_block(const PersonaFragments& f);

}  // namespace medsim
