#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/persona.hpp"
#include "medsim/profile.hpp"
#include "medsim/promptkit.hpp"
#include "medsim/support.hpp"

namespace medsim {

enum class Speaker : std::uint8_t { doctor, patient };

std::string_view speaker_name(Speaker s);

struct Sentence {
  std::string text;
  int index = 0;       // position within the utterance
  int turn_index = 0;  // position of the utterance within the transcript
};

struct Turn {
  Speaker role = Speaker::doctor;
  std::string text;
  std::vector<Sentence> sentences;
  int turn_index = 0;
  int round = 0;
  // Patient turns only: the confusion phase the turn was produced under.
  std::optional<DazedPhase> dazed_phase;
  std::int64_t timestamp_ms = 0;
};

enum class Termination : std::uint8_t { ddx_emitted, round_limit, user_ended, aborted };

std::string_view termination_name(Termination t);
std::optional<Termination> parse_termination(std::string_view s);

struct Transcript {
  std::string session_id;
  std::string profile_id;
  PersonaSpec persona;
  WordSample words;
  int total_idx = kDefaultTotalIdx;
  int top_k_diagnosis = kDefaultTopK;
  std::uint64_t seed = kDefaultSeed;
  std::string template_version;
  std::vector<Turn> turns;
  std::optional<Termination> termination;  // absent while the session is live
  std::optional<std::vector<std::string>> ddx_list;
  std::optional<std::string> abort_reason;
  std::int64_t started_ms = 0;
  std::optional<std::int64_t> ended_ms;

  bool complete() const { return termination.has_value(); }
  int doctor_turns() const;
  int patient_turns() const;
};

// One header line followed by one line per turn.
std::string transcript_to_jsonl(const Transcript& t);
Transcript transcript_from_jsonl(std::string_view text, const std::string& source = "<memory>");
void save_transcript(const std::filesystem::path& path, const Transcript& t);
Transcript load_transcript(const std::filesystem::path& path);
std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& session_id);

// Checks alternation, round bounds and DDx/termination consistency.
ValidationResult validate_transcript(const Transcript& t);

// Dialogue history as "Doctor: ...\nPatient: ..." lines, optionally only the
// first `n_turns` turns.
std::string render_history(const Transcript& t, std::optional<std::size_t> n_turns = {});

inline constexpr std::string_view kDdxMarker = "[DDX]";

// Diagnoses following the marker, split on commas, semicolons and newlines
// outside parentheses. Absent when there is no marker or no entry after it.
std::optional<std::vector<std::string>> extract_ddx(std::string_view doctor_text);

// Rule-based split on . ! ? and line breaks, guarding abbreviations from the
// segmentation asset and decimals.
std::vector<Sentence> split_sentences(std::string_view utterance, int turn_index = 0);

struct RoleStats {
  int utterances = 0;
  int sentences = 0;
  int words = 0;
  double sentences_per_utterance = 0.0;
  double words_per_sentence = 0.0;
};

struct DialogueStats {
  int n_turns = 0;
  int n_rounds = 0;
  std::optional<RoleStats> doctor;
  std::optional<RoleStats> patient;
};

DialogueStats dialogue_stats(const Transcript& t);
nlohmann::json dialogue_stats_to_json(const DialogueStats& s);

struct SessionConfig {
  int total_idx = kDefaultTotalIdx;
  int top_k_diagnosis = kDefaultTopK;
  std::uint64_t seed = kDefaultSeed;
};

// Turn-taking state machine for one consultation. Each round is a doctor turn
// followed by the patient's reply. After the reply the session ends if the
// doctor gave a DDx, or if the round was the forced final round issued once
// total_idx regular rounds have passed.
class ConsultationSession {
 public:
  ConsultationSession(std::string session_id, PatientProfile profile, PersonaSpec persona, WordSample words,
                      SessionConfig cfg, Clock& clock);
  // Resumes a live session from a persisted transcript.
  ConsultationSession(Transcript transcript, PatientProfile profile, Clock& clock);

  const Transcript& transcript() const { return t_; }
  const PatientProfile& profile() const { return profile_; }
  bool finished() const { return t_.complete(); }
  bool awaiting_doctor() const;
  bool awaiting_patient() const;
  // 1-based index of the round in progress or about to start.
  int current_round() const;
  bool final_round() const { return current_round() > t_.total_idx; }

  std::string doctor_system() const;
  std::vector<ChatMessage> doctor_messages() const;
  Slots doctor_vars() const;
  std::string patient_system() const;
  std::vector<ChatMessage> patient_messages() const;
  Slots patient_vars() const;

  void add_doctor_turn(std::string text);
  void add_patient_turn(std::string text);
  // A human doctor ends the session by submitting a DDx form.
  void end_by_user(std::vector<std::string> ddx);
  void abort(std::string reason);

 private:
  void append(Speaker role, std::string text);

  Transcript t_;
  PatientProfile profile_;
  PromptContext ctx_;
  std::string patient_system_;
  Clock* clock_;
};

// Drives a session to completion with model backends. Backend failures end the
// session as aborted with the partial transcript.
Transcript run_consultation(const PatientProfile& profile, const PersonaSpec& persona, const WordSample& words,
                            ChatClient& doctor, ChatClient& patient, const SessionConfig& cfg, Clock& clock,
                            const std::string& session_id);

}  // namespace medsim
