#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsim/text.hpp"

namespace medsim {

class JudgeClient;

// Serialized form of an absent value. Distinct from the empty string.
inline constexpr std::string_view kNotRecorded = "Not recorded";

using Field = std::optional<std::string>;

// The 24 profile items. Order follows the item-linkage category list, with
// disposition (never linked) placed before diagnosis.
enum class ItemKey : std::uint8_t {
  age,
  gender,
  race,
  tobacco,
  alcohol,
  illicit_drug,
  sexual_history,
  exercise,
  marital_status,
  children,
  living_situation,
  occupation,
  insurance,
  allergies,
  family_medical_history,
  medical_device,
  medical_history,
  present_illness,
  chief_complaint,
  pain,
  medication,
  arrival_transport,
  disposition,
  diagnosis,
};

inline constexpr std::size_t kItemCount = 24;
inline constexpr std::size_t kLinkageCount = 23;

const std::array<ItemKey, kItemCount>& all_items();
// Categories a sentence can be linked to (everything but disposition).
const std::array<ItemKey, kLinkageCount>& linkage_items();
std::string_view item_name(ItemKey key);
// Human label used in prompts ("Illicit drug use").
std::string_view item_label(ItemKey key);
std::optional<ItemKey> parse_item(std::string_view name);
// Disposition and diagnosis never reach the doctor.
bool hidden_from_doctor(ItemKey key);

enum class ItemGroup : std::uint8_t { social, pmh, current_visit };

std::string_view group_name(ItemGroup g);
const std::vector<ItemKey>& group_members(ItemGroup g);
inline constexpr std::array<ItemGroup, 3> kItemGroups{ItemGroup::social, ItemGroup::pmh,
                                                      ItemGroup::current_visit};

struct PresentIllness {
  Field positive;
  Field negative;
  friend bool operator==(const PresentIllness&, const PresentIllness&) = default;
};

struct PatientProfile {
  std::string profile_id;

  int age = 0;
  std::string gender;
  std::string race;

  Field tobacco;
  Field alcohol;
  Field illicit_drug;
  Field sexual_history;
  Field exercise;
  Field marital_status;
  Field children;
  Field living_situation;
  Field occupation;
  Field insurance;

  Field allergies;
  Field family_medical_history;
  Field medical_device;
  Field medical_history;

  PresentIllness present_illness;
  Field chief_complaint;
  int pain = 0;
  std::optional<std::vector<std::string>> medications;
  std::string arrival_transport;
  std::string disposition;
  std::string diagnosis;

  friend bool operator==(const PatientProfile&, const PatientProfile&) = default;
};

// Text value of an item as the judges see it; nullopt when absent.
Field item_text(const PatientProfile& p, ItemKey key);
Field* text_field(PatientProfile& p, ItemKey key);

PatientProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const PatientProfile& p);
// Accepts a single JSON object, a JSON array, or line-delimited objects.
std::vector<PatientProfile> load_profiles(const std::filesystem::path& path);
void save_profiles(const std::filesystem::path& path, std::span<const PatientProfile> profiles);

struct Violation {
  std::string path;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline constexpr int kMaxMedications = 15;

ValidationResult validate_profile(const PatientProfile& p);

// --- cohort filtering -------------------------------------------------------

struct NoteSections {
  std::string allergies;
  std::string chief_complaint;
  std::string hpi;
  std::string pmh;
  std::string social_history;
  std::string family_history;
};

struct RawRecord {
  std::string record_id;
  std::optional<int> age;
  std::string gender;
  std::string race;
  std::string marital_status;
  std::string insurance;
  std::string chiefcomplaint;
  std::string arrival_transport;
  std::string disposition;
  std::string diagnosis;
  std::string pain;  // raw triage text, converted during filtering
  std::vector<std::string> medications;
  NoteSections note;
  // Note-derived items that were already structured upstream, keyed by
  // profile field name ("tobacco", "present_illness_positive", ...).
  std::vector<std::pair<std::string, std::string>> extracted;
};

RawRecord raw_record_from_json(const nlohmann::json& j);
nlohmann::json raw_record_to_json(const RawRecord& r);
std::vector<RawRecord> load_raw_records(const std::filesystem::path& path);
// Re-expresses an accepted profile as a raw record carrying `notes`.
RawRecord raw_record_from_profile(const PatientProfile& p, NoteSections notes);

enum class FilterRule : std::uint8_t {
  missing_field,
  pain_non_numeric,
  pain_out_of_range,
  hpi_too_short,
  hpi_too_long,
  pmh_too_long,
  excluded_consciousness,
  excluded_language,
};

std::string_view filter_rule_name(FilterRule r);

struct FilterReason {
  FilterRule rule;
  std::string detail;
};

struct FilterOutcome {
  bool accepted = false;
  std::vector<FilterReason> reasons;
  // Non-rejecting adjustments, e.g. medication truncation.
  std::vector<std::string> notes;
  std::optional<PatientProfile> normalized;
};

inline constexpr std::size_t kHpiMinWords = 10;
inline constexpr std::size_t kHpiMaxWords = 350;
inline constexpr std::size_t kPmhMaxWords = 80;

FilterOutcome apply_cohort_filters(const RawRecord& r);

// --- note ingestion ---------------------------------------------------------

inline constexpr int kMinAlignmentScore = 3;

struct IngestResult {
  std::optional<PatientProfile> profile;  // empty when rejected
  int alignment_score = 0;
  std::string alignment_explanation;
  std::string rejection;
};

// Three judge calls: structured extraction of the note-derived items,
// profile/diagnosis alignment scoring, and imputation of absent lifestyle
// items. Fields already holding valid data are never changed by imputation.
IngestResult ingest_note(const RawRecord& r, JudgeClient& judge);

// --- CEFR vocabulary --------------------------------------------------------

enum class CefrLevel : std::uint8_t { A, B, C };

std::string_view cefr_name(CefrLevel l);
std::optional<CefrLevel> parse_cefr(std::string_view s);

struct CefrLexicon {
  CefrLevel level = CefrLevel::A;
  std::vector<std::string> general_words;
  std::vector<std::string> medical_words;
};

struct WordSample {
  CefrLevel level = CefrLevel::A;
  std::vector<std::string> understand_words;
  std::vector<std::string> misunderstand_words;
  std::vector<std::string> understand_med_words;
  std::vector<std::string> misunderstand_med_words;
  friend bool operator==(const WordSample&, const WordSample&) = default;
};

inline constexpr std::size_t kWordsPerSlot = 10;

// Files named general_<L>.txt and medical_<L>.txt, one word per line.
std::vector<CefrLexicon> load_lexicons(const std::filesystem::path& dir);
WordSample sample_cefr_words(std::span<const CefrLexicon> lexicons, CefrLevel level,
                             std::uint64_t seed);
nlohmann::json word_sample_to_json(const WordSample& w);
WordSample word_sample_from_json(const nlohmann::json& j);

// --- prompt rendering -------------------------------------------------------

struct ProfileSections {
  std::string background;
  std::string current_visit;
};

std::string display(const Field& f);
ProfileSections render_profile_sections(const PatientProfile& p);
// Every profile value keyed by its prompt slot name ("chiefcomplaint",
// "present_illness_positive", ...), absent values as "Not recorded".
Slots profile_slots(const PatientProfile& p);

}  // namespace medsim
