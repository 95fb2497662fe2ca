#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include <json.hpp>

#include "medsim/gateway.hpp"
#include "medsim/orchestrator.hpp"
#include "medsim/profile.hpp"
#include "medsim/text.hpp"

namespace testkit {

inline std::filesystem::path source_dir() { return MEDSIM_SOURCE_DIR; }
inline std::filesystem::path demo_dir() { return source_dir() / "data" / "demo"; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

// Fresh directory under the system temp dir, removed first if present.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("medsim-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline medsim::PatientProfile sample_profile(const std::string& id = "t01") {
  medsim::PatientProfile p;
  p.profile_id = id;
  p.age = 67;
  p.gender = "M";
  p.race = "White";
  p.tobacco = "Smokes one pack per day";
  p.alcohol = "Two beers on weekends";
  p.illicit_drug = "Denies";
  p.exercise = "Walks daily";
  p.marital_status = "Married";
  p.children = "Two sons";
  p.living_situation = "Lives with wife";
  p.occupation = "Retired electrician";
  p.insurance = "Medicare";
  p.allergies = "Penicillin";
  p.family_medical_history = "Father had COPD";
  p.medical_history = "COPD, hypertension";
  p.present_illness = {"Productive cough for 4 days", "No chest pain"};
  p.chief_complaint = "Cough";
  p.pain = 4;
  p.medications = std::vector<std::string>{"Albuterol inhaler", "Lisinopril"};
  p.arrival_transport = "WALK IN";
  p.disposition = "ADMITTED";
  p.diagnosis = "Pneumonia";
  return p;
}

inline std::vector<medsim::CefrLexicon> demo_lexicons() { return medsim::load_lexicons(demo_dir() / "lexicons"); }

struct ScriptedJudge {
  std::shared_ptr<medsim::ScriptedTransport> transport;
  std::shared_ptr<medsim::ChatClient> client;
  std::unique_ptr<medsim::JudgeClient> judge;

  explicit ScriptedJudge(nlohmann::json script) {
    transport = std::make_shared<medsim::ScriptedTransport>(std::move(script));
    medsim::BackendConfig cfg;
    cfg.temperature = medsim::kJudgeTemperature;
    client = std::make_shared<medsim::ChatClient>(cfg, transport, [](int) {});
    judge = std::make_unique<medsim::JudgeClient>(client);
  }
  medsim::JudgeClient& operator*() { return *judge; }
  std::size_t calls() const { return transport->calls(); }
};

inline std::shared_ptr<medsim::ChatClient> scripted_client(nlohmann::json script) {
  medsim::BackendConfig cfg;
  return std::make_shared<medsim::ChatClient>(cfg, std::make_shared<medsim::ScriptedTransport>(std::move(script)),
                                              [](int) {});
}

// A finished two-round consultation: one question, then a DDx.
inline medsim::Transcript short_transcript(const medsim::PatientProfile& p, const medsim::PersonaSpec& persona,
                                           const std::string& id = "sess") {
  static const auto lex = demo_lexicons();
  medsim::FixedClock clock(0, 1000);
  medsim::ConsultationSession s(id, p, persona, medsim::sample_cefr_words(lex, persona.language, 7), {}, clock);
  s.add_doctor_turn("What brings you in today?");
  s.add_patient_turn("I have a bad cough. It started four days ago.");
  s.add_doctor_turn("[DDX] Pneumonia, Bronchitis");
  s.add_patient_turn("Thank you, doctor.");
  return s.transcript();
}

}  // namespace testkit
