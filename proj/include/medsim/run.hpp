#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/orchestrator.hpp"
#include "medsim/persona.hpp"
#include "medsim/profile.hpp"
#include "medsim/stats.hpp"

namespace medsim {

// How personas are paired with profiles:
//   cycle  profile i gets personas[i % n]
//   cross  every profile runs with every listed persona
//   random profile i gets the i-th entry of a seeded shuffle of the 37
//          valid personas, reshuffled after every 37 profiles
enum class Assignment : std::uint8_t { cycle, cross, random };

struct RunConfig {
  std::filesystem::path base_dir;  // directory of the config file
  BackendConfig patient;
  BackendConfig doctor;
  BackendConfig judge;
  std::filesystem::path profiles;
  std::filesystem::path lexicon_dir;
  std::vector<PersonaSpec> personas;
  Assignment assignment = Assignment::cycle;
  int total_idx = kDefaultTotalIdx;
  int top_k_diagnosis = kDefaultTopK;
  std::filesystem::path out;
  std::uint64_t seed = kDefaultSeed;
  int concurrency = 4;
  bool fixed_clock = false;
  std::optional<std::filesystem::path> assets;
  std::optional<std::filesystem::path> judge_cache;  // defaults to out/cache
  std::optional<std::filesystem::path> ratings;      // plausibility ratings CSV
  std::optional<std::filesystem::path> gold;         // annotated sentences JSONL
  std::optional<std::filesystem::path> raw_records;  // input for ingest
  int n_bootstrap = kDefaultBootstrap;
  // Whether the service shows a live session's persona to the human doctor.
  bool reveal_persona = true;
  nlohmann::json source;  // the config as written
};

// Relative paths resolve against base_dir. Referenced inputs must exist.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

struct SessionPlan {
  std::string session_id;
  std::string profile_id;
  PersonaSpec persona;
};

std::string session_id_for(const std::string& profile_id, const PersonaSpec& persona);
std::vector<SessionPlan> plan_sessions(const std::vector<PatientProfile>& profiles, const RunConfig& cfg);
// Vocabulary sample for a session, derived from the run seed and session id.
WordSample session_words(const std::vector<CefrLexicon>& lexicons, const PersonaSpec& persona, std::uint64_t seed,
                         const std::string& session_id);

// Run directory layout.
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path transcripts() const { return root / "transcripts"; }
  std::filesystem::path verdicts() const { return root / "verdicts"; }
  std::filesystem::path evaluations() const { return root / "eval"; }
  std::filesystem::path sessions() const { return root / "sessions"; }
  std::filesystem::path annotations() const { return root / "annotations"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path report() const { return root / "report.json"; }
};

struct SimulateResult {
  int planned = 0;
  int completed = 0;  // newly run this time
  int skipped = 0;    // already complete on disk
  int aborted = 0;
  std::vector<std::filesystem::path> transcripts;
};

// Backends default to the config's; tests inject their own clients.
struct Backends {
  std::shared_ptr<ChatClient> patient;
  std::shared_ptr<ChatClient> doctor;
  std::shared_ptr<ChatClient> judge;
};
Backends make_backends(const RunConfig& cfg);

SimulateResult cmd_simulate(const RunConfig& cfg);
SimulateResult cmd_simulate(const RunConfig& cfg, const Backends& backends);

struct EvaluateResult {
  nlohmann::json report;
  int evaluated = 0;
  int failed = 0;
  std::size_t judge_calls = 0;
};

// Judges every completed transcript, persists per-session results, then
// writes the report. Raises EmptyInputError when there is nothing to judge.
EvaluateResult cmd_evaluate(const RunConfig& cfg);
EvaluateResult cmd_evaluate(const RunConfig& cfg, const Backends& backends);

// Rebuilds the report from persisted transcripts and judge results only.
nlohmann::json build_report(const RunConfig& cfg);
nlohmann::json cmd_report(const RunConfig& cfg);

nlohmann::json cmd_agree(const std::filesystem::path& ratings_csv, int categories, int n_bootstrap,
                         std::uint64_t seed);

struct IngestSummary {
  int records = 0;
  int accepted = 0;
  int rejected = 0;
};
IngestSummary cmd_ingest(const RunConfig& cfg);
IngestSummary cmd_ingest(const RunConfig& cfg, JudgeClient& judge);

}  // namespace medsim
