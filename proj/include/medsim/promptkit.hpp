#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "medsim/persona.hpp"
#include "medsim/profile.hpp"
#include "medsim/text.hpp"

namespace medsim {

// Versioned prompt templates described by templates/manifest.json. Each
// template has an optional system part and a user part; the manifest's slot
// list must match the slots that actually occur, which is checked at load.
class TemplateStore {
 public:
  static TemplateStore load(const std::filesystem::path& dir);
  static const TemplateStore& standard();

  const std::string& version() const { return version_; }
  bool contains(std::string_view id) const;
  bool has_system(std::string_view id) const;
  std::string render_system(std::string_view id, const Slots& slots) const;
  std::string render_user(std::string_view id, const Slots& slots) const;

 private:
  struct Entry {
    std::string system;
    std::string user;
  };
  const Entry& entry(std::string_view id) const;

  std::string version_;
  std::map<std::string, Entry, std::less<>> entries_;
};

struct PromptContext {
  ProfileSections sections;
  PersonaFragments fragments;
  std::string reminder;
  int sent_limit = kDefaultSentLimit;
  int total_idx = 30;
  int curr_idx = 1;
  int top_k_diagnosis = 5;
  // Basics a clinician knows before history taking starts.
  std::string gender;
  std::string age;
  std::string arrival_transport;

  int remain_idx() const { return total_idx - curr_idx; }
};

inline constexpr int kDefaultTotalIdx = 30;
inline constexpr int kDefaultTopK = 5;

PromptContext make_prompt_context(const PatientProfile& p, const PersonaSpec& s, const WordSample& w,
                                  int total_idx = kDefaultTotalIdx, int top_k = kDefaultTopK);

std::string build_patient_prompt(const PromptContext& ctx);
// With final_round set, an instruction to stop asking and give the DDx list is
// appended and the counters read as the last round.
std::string build_doctor_prompt(const PromptContext& ctx, bool final_round = false);

enum class JudgeKind : std::uint8_t {
  fidelity,
  sentence_class,
  item_link,
  nli,
  unsupported,
  plausibility,
  profile_extract,
  consistency,
  ddx,
  note_extract,
  note_filter,
  note_impute,
};

inline constexpr std::array<JudgeKind, 12> kJudgeKinds{
    JudgeKind::fidelity,      JudgeKind::sentence_class,  JudgeKind::item_link,
    JudgeKind::nli,           JudgeKind::unsupported,     JudgeKind::plausibility,
    JudgeKind::profile_extract, JudgeKind::consistency,   JudgeKind::ddx,
    JudgeKind::note_extract,  JudgeKind::note_filter,     JudgeKind::note_impute};

std::string_view judge_kind_name(JudgeKind k);
std::optional<JudgeKind> parse_judge_kind(std::string_view s);

struct JudgePrompt {
  JudgeKind kind = JudgeKind::ddx;
  std::string system;  // empty when the whole prompt goes in the user turn
  std::string user;
  // The payload plus "kind"; passed to backends as request metadata.
  Slots vars;
};

JudgePrompt build_judge_prompt(JudgeKind kind, const Slots& payload);

// Renders the format-repair follow-up used after an unparseable judge answer.
std::string build_repair_prompt(std::string_view error, std::string_view schema);

}  // namespace medsim
