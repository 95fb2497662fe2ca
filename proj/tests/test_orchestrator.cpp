#include <doctest.h>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/orchestrator.hpp"

using namespace medsim;
using nlohmann::json;

namespace {

std::vector<std::string> texts(const std::vector<Sentence>& s) {
  std::vector<std::string> out;
  for (auto& x : s) out.push_back(x.text);
  return out;
}

PersonaSpec persona(const std::string& code) { return *parse_persona_code(code); }

PersonaSpec calm() { return persona("neutral-B-high-normal"); }
PersonaSpec dazed() { return persona("neutral-B-high-high"); }

WordSample words_for(const PersonaSpec& p) {
  static const auto lex = testkit::demo_lexicons();
  return sample_cefr_words(lex, p.language, 1);
}

}  // namespace

TEST_CASE("sentence splitting") {
  using V = std::vector<std::string>;
  CHECK(texts(split_sentences("Hello. How are you? Fine!")) == V{"Hello.", "How are you?", "Fine!"});
  CHECK(texts(split_sentences("Dr. Smith saw me. It was 8.5 out of 10.")) ==
        V{"Dr. Smith saw me.", "It was 8.5 out of 10."});
  CHECK(texts(split_sentences("Wait...what? \"Really?!\" Yes")) == V{"Wait...what?", "\"Really?!\"", "Yes"});
  CHECK(texts(split_sentences("line one\nline two")) == V{"line one", "line two"});
  CHECK(split_sentences("   ").empty());
  const auto s = split_sentences("A. B.", 5);
  CHECK(s[1].index == 1);
  CHECK(s[1].turn_index == 5);
}

TEST_CASE("DDx extraction") {
  using V = std::vector<std::string>;
  CHECK(extract_ddx("Based on this: [DDX] Pneumonia, COPD exacerbation; Bronchitis.") ==
        V{"Pneumonia", "COPD exacerbation", "Bronchitis"});
  CHECK(extract_ddx("[DDX]: Infection (viral, bacterial), Flu") == V{"Infection (viral, bacterial)", "Flu"});
  CHECK(extract_ddx("[DDX]\n- Migraine\n- Tension headache") == V{"Migraine", "Tension headache"});
  CHECK_FALSE(extract_ddx("Any fever?"));
  CHECK_FALSE(extract_ddx("[DDX]  "));
}

TEST_CASE("session ends when the doctor gives a DDx") {
  const auto t = testkit::short_transcript(testkit::sample_profile(), persona("neutral-B-high-normal"));
  CHECK(t.termination == Termination::ddx_emitted);
  CHECK(t.ddx_list == std::vector<std::string>{"Pneumonia", "Bronchitis"});
  CHECK(t.doctor_turns() == 2);
  CHECK(t.patient_turns() == 2);
  CHECK(t.turns[3].round == 2);
  CHECK(validate_transcript(t).ok());
}

TEST_CASE("turn order is enforced") {
  FixedClock clock;
  ConsultationSession s("x", testkit::sample_profile(), calm(), words_for(calm()), {}, clock);
  CHECK(s.awaiting_doctor());
  CHECK_THROWS_AS(s.add_patient_turn("hi"), PreconditionError);
  s.add_doctor_turn("Hello?");
  CHECK_THROWS_AS(s.add_doctor_turn("Again?"), PreconditionError);
  CHECK(s.awaiting_patient());
}

TEST_CASE("invalid persona or settings are rejected") {
  FixedClock clock;
  PersonaSpec bad = persona("neutral-B-high-normal");
  bad.confusion = Confusion::high;
  bad.personality = Personality::verbose;
  CHECK_THROWS_AS(ConsultationSession("x", testkit::sample_profile(), bad, {}, {}, clock), PreconditionError);
  SessionConfig cfg;
  cfg.total_idx = 0;
  CHECK_THROWS_AS(
      ConsultationSession("x", testkit::sample_profile(), calm(), words_for(calm()), cfg, clock),
      PreconditionError);
}

TEST_CASE("the forced final round follows total_idx regular rounds") {
  FixedClock clock;
  SessionConfig cfg;
  cfg.total_idx = 2;
  ConsultationSession s("x", testkit::sample_profile(), calm(), words_for(calm()), cfg, clock);
  for (int i = 0; i < 2; ++i) {
    CHECK(s.doctor_vars().at("final_round") == "false");
    s.add_doctor_turn("Question?");
    s.add_patient_turn("Answer.");
  }
  CHECK(s.final_round());
  CHECK(s.doctor_vars().at("final_round") == "true");
  CHECK(s.doctor_vars().at("curr_idx") == "3");
  s.add_doctor_turn("No diagnosis yet.");
  s.add_patient_turn("Okay.");
  CHECK(s.transcript().termination == Termination::round_limit);
  CHECK_FALSE(s.transcript().ddx_list);
  CHECK(validate_transcript(s.transcript()).ok());
}

TEST_CASE("user-ended sessions keep the submitted DDx") {
  FixedClock clock;
  ConsultationSession s("x", testkit::sample_profile(), calm(), words_for(calm()), {}, clock);
  s.add_doctor_turn("Hello?");
  s.add_patient_turn("Hi.");
  CHECK_THROWS_AS(s.end_by_user({" ", ""}), PreconditionError);
  s.end_by_user({" Flu ", "", "Cold"});
  CHECK(s.transcript().ddx_list == std::vector<std::string>{"Flu", "Cold"});
  CHECK_THROWS_AS(s.end_by_user({"Flu"}), PreconditionError);
}

TEST_CASE("high confusion marks the phase on patient turns") {
  FixedClock clock;
  ConsultationSession s("x", testkit::sample_profile(), dazed(), words_for(dazed()), {}, clock);
  s.add_doctor_turn("Hello?");
  CHECK(s.patient_vars().at("dazed_phase") == "high");
  s.add_patient_turn("What... where am I?");
  REQUIRE(s.transcript().turns[1].dazed_phase);
  CHECK_FALSE(s.transcript().turns[0].dazed_phase);
}

TEST_CASE("transcript JSONL round trip and validation") {
  auto t = testkit::short_transcript(testkit::sample_profile(), persona("verbose-A-low-normal"), "rt");
  const auto text = transcript_to_jsonl(t);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  const auto back = transcript_from_jsonl(text);
  CHECK(transcript_to_jsonl(back) == text);
  CHECK(back.words == t.words);
  CHECK(back.turns[1].sentences.size() == 2);

  const auto dir = testkit::scratch("transcript");
  save_transcript(transcript_path(dir, "rt"), t);
  CHECK(transcript_to_jsonl(load_transcript(dir / "rt.transcript")) == text);

  CHECK_THROWS_AS(transcript_from_jsonl("{not json"), ParseError);
  CHECK_THROWS_AS(transcript_from_jsonl(""), ParseError);

  auto broken = t;
  std::swap(broken.turns[0].role, broken.turns[1].role);
  broken.ddx_list.reset();
  const auto v = validate_transcript(broken);
  CHECK(v.violations.size() == 3);
}

TEST_CASE("history rendering") {
  const auto t = testkit::short_transcript(testkit::sample_profile(), persona("neutral-B-high-normal"));
  CHECK(render_history(t, 2) == "Doctor: What brings you in today?\nPatient: I have a bad cough. It started four days ago.");
  CHECK(render_history(t, 0).empty());
}

TEST_CASE("run_consultation drives scripted agents") {
  auto doctor = testkit::scripted_client(
      json{{"rules", json::array({{{"when", {{"min_assistant_turns", 2}}}, {"respond", "[DDX] Pneumonia"}}})},
           {"default", "Tell me more about {{gender}} symptoms?"}});
  auto patient = testkit::scripted_client(json{{"default", "My pain is {{pain}}."}});
  FixedClock clock(100, 10);
  const auto t = run_consultation(testkit::sample_profile(), calm(), words_for(calm()), *doctor, *patient,
                                  {}, clock, "run");
  CHECK(t.termination == Termination::ddx_emitted);
  CHECK(t.turns.size() == 6);
  CHECK(t.turns[0].text == "Tell me more about M symptoms?");
  CHECK(t.turns[1].text == "My pain is 4.");
  CHECK(t.started_ms == 100);
  CHECK(t.turns[0].timestamp_ms == 110);
}

TEST_CASE("backend failure aborts with the partial transcript") {
  auto doctor = testkit::scripted_client(json{{"default", "Question?"}});
  BackendConfig cfg;
  cfg.max_retries = 1;
  auto failing = std::make_shared<ChatClient>(
      cfg, std::make_shared<ScriptedTransport>(json{{"fail_first", {{"count", 5}, {"status", 500}}}, {"default", "x"}}),
      [](int) {});
  FixedClock clock;
  const auto t = run_consultation(testkit::sample_profile(), calm(), words_for(calm()), *doctor, *failing,
                                  {}, clock, "abort");
  CHECK(t.termination == Termination::aborted);
  CHECK(t.turns.size() == 1);
  REQUIRE(t.abort_reason);
  CHECK(validate_transcript(t).ok());
}

TEST_CASE("dialogue statistics") {
  const auto t = testkit::short_transcript(testkit::sample_profile(), persona("neutral-B-high-normal"));
  const auto s = dialogue_stats(t);
  CHECK(s.n_turns == 4);
  CHECK(s.n_rounds == 2);
  REQUIRE(s.patient);
  CHECK(s.patient->utterances == 2);
  CHECK(s.patient->sentences == 3);
  CHECK(s.patient->words == 13);
  CHECK(s.patient->sentences_per_utterance == doctest::Approx(1.5));
  CHECK(s.patient->words_per_sentence == doctest::Approx(13.0 / 3));
  const auto j = dialogue_stats_to_json(s);
  CHECK(j.at("doctor").at("utterances") == 2);
}
