#include <doctest.h>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/run.hpp"

using namespace medsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json demo_config() { return json::parse(read_text_file(testkit::demo_dir() / "config.json")); }

// The demo config with a scratch output directory and a smaller cohort.
RunConfig small_config(const std::string& name, json overrides = json::object()) {
  auto j = demo_config();
  j["out"] = testkit::scratch(name).string();
  j["personas"] = json::array({"neutral-B-high-normal"});
  j["assignment"] = "cycle";
  j.merge_patch(overrides);
  return run_config_from_json(j, testkit::demo_dir());
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

}  // namespace

TEST_CASE("config parsing and defaults") {
  const auto cfg = run_config_from_json(demo_config(), testkit::demo_dir());
  CHECK(cfg.personas.size() == 3);
  CHECK(cfg.assignment == Assignment::cross);
  CHECK(cfg.fixed_clock);
  CHECK(cfg.judge.temperature == kJudgeTemperature);
  CHECK(cfg.patient.temperature == kAgentTemperature);
  CHECK(cfg.profiles == testkit::demo_dir() / "profiles.jsonl");

  auto j = demo_config();
  j.erase("concurrency");
  j.erase("n_bootstrap");
  const auto d = run_config_from_json(j, testkit::demo_dir());
  CHECK(d.concurrency == 4);
  CHECK(d.n_bootstrap == kDefaultBootstrap);
}

TEST_CASE("config errors") {
  auto with = [](json patch) {
    auto j = demo_config();
    j.merge_patch(patch);
    return j;
  };
  const auto dir = testkit::demo_dir();
  CHECK_THROWS_AS(run_config_from_json(json::array(), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"profiles", "missing.jsonl"}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"out", nullptr}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"total_idx", 0}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"clock", "sundial"}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"assignment", "lottery"}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"personas", json::array({"verbose-A-low-high"})}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"personas", json::array()}}), dir), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(with({{"backends", {{"judge", {{"kind", "http"}}}}}}), dir), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "nope.json"), ConfigError);
  const auto bad = testkit::scratch("bad-config") / "c.json";
  write_text_file(bad, "{ not json");
  CHECK_THROWS_AS(load_run_config(bad), ConfigError);
}

TEST_CASE("session planning") {
  const auto profiles = load_profiles(testkit::demo_dir() / "profiles.jsonl");
  auto cfg = small_config("plan");
  cfg.personas = {*parse_persona_code("neutral-B-high-normal"), *parse_persona_code("verbose-A-low-normal")};
  cfg.assignment = Assignment::cycle;
  auto plans = plan_sessions(profiles, cfg);
  REQUIRE(plans.size() == 5);
  CHECK(plans[1].persona == cfg.personas[1]);
  CHECK(plans[2].persona == cfg.personas[0]);
  CHECK(plans[0].session_id == "p01__neutral-B-high-normal");

  cfg.assignment = Assignment::cross;
  CHECK(plan_sessions(profiles, cfg).size() == 10);

  cfg.assignment = Assignment::random;
  std::vector<PatientProfile> many;
  for (int i = 0; i < 37; ++i) {
    auto p = profiles[0];
    p.profile_id = "r" + std::to_string(i);
    many.push_back(p);
  }
  plans = plan_sessions(many, cfg);
  std::set<std::string> codes;
  for (auto& p : plans) codes.insert(persona_code(p.persona));
  CHECK(codes.size() == 37);  // one full deck
  const auto again = plan_sessions(many, cfg);
  CHECK(again[5].persona == plans[5].persona);
}

TEST_CASE("session vocabulary depends on seed and session") {
  const auto lex = testkit::demo_lexicons();
  const auto persona = *parse_persona_code("verbose-A-low-normal");
  const auto a = session_words(lex, persona, 42, "x");
  CHECK(a == session_words(lex, persona, 42, "x"));
  CHECK(a.level == CefrLevel::A);
  CHECK_FALSE(a == session_words(lex, persona, 42, "y"));
}

TEST_CASE("simulate, evaluate and report on scripted backends") {
  const auto cfg = small_config("pipeline");
  const auto sim = cmd_simulate(cfg);
  CHECK(sim.planned == 5);
  CHECK(sim.completed == 5);
  CHECK(sim.aborted == 0);
  const RunLayout layout{cfg.out};
  CHECK(count_files(layout.transcripts(), ".transcript") == 5);
  const auto manifest = json::parse(read_text_file(layout.manifest()));
  CHECK(manifest.at("sessions").size() == 5);
  CHECK(manifest.at("seed") == 42);

  const auto again = cmd_simulate(cfg);
  CHECK(again.skipped == 5);
  CHECK(again.completed == 0);

  const auto ev = cmd_evaluate(cfg);
  CHECK(ev.evaluated == 5);
  CHECK(ev.failed == 0);
  CHECK(ev.judge_calls > 0);
  CHECK(count_files(layout.evaluations(), ".json") == 5);
  CHECK(count_files(layout.verdicts(), ".jsonl") == 5);
  const auto& r = ev.report;
  CHECK(r.at("run").at("n_transcripts") == 5);
  for (auto& [name, found] : r.at("checks").items()) CHECK_MESSAGE(found.empty(), name);
  CHECK(r.at("ddx").at("n") == 5);
  CHECK(r.at("ddx").at("n_correct") == 4);  // only p04 misses
  CHECK(r.at("agreement").is_null());

  // The report is rebuilt from disk without judge calls.
  CHECK(cmd_report(cfg) == r);
  CHECK(json::parse(read_text_file(layout.report())) == r);
}

TEST_CASE("evaluation failures are isolated per step") {
  auto cfg = small_config("isolated");
  cmd_simulate(cfg);
  auto script = json::parse(read_text_file(testkit::demo_dir() / "judge.script.json"));
  // Fidelity answers become unusable; other steps still succeed.
  script["rules"].insert(script["rules"].begin(),
                         json{{"when", {{"var_equals", {{"kind", "fidelity"}}}}}, {"respond", "no idea"}});
  Backends b = make_backends(cfg);
  b.judge = testkit::scripted_client(script);
  const auto ev = cmd_evaluate(cfg, b);
  CHECK(ev.failed == 5);
  const auto rec = json::parse(read_text_file(RunLayout{cfg.out}.evaluations() / "p01__neutral-B-high-normal.json"));
  CHECK(rec.at("errors").contains("fidelity"));
  CHECK_FALSE(rec.at("errors").contains("factuality"));
  CHECK(ev.report.at("completeness").at("fidelity").at("failed").size() == 5);
  CHECK(ev.report.at("completeness").at("factuality").at("evaluated") == 5);
}

TEST_CASE("backend outages abort sessions and re-runs pick them up") {
  auto cfg = small_config("outage");
  Backends b = make_backends(cfg);
  BackendConfig bc;
  bc.max_retries = 0;
  b.patient = std::make_shared<ChatClient>(
      bc, std::make_shared<ScriptedTransport>(json{{"fail_first", {{"count", 1000}, {"status", 503}}}}), [](int) {});
  const auto sim = cmd_simulate(cfg, b);
  CHECK(sim.aborted == 5);
  CHECK_THROWS_AS(cmd_evaluate(cfg), EmptyInputError);
  const auto retry = cmd_simulate(cfg);
  CHECK(retry.completed == 5);
  CHECK(retry.skipped == 0);
}

TEST_CASE("evaluation without transcripts is an error") {
  CHECK_THROWS_AS(cmd_evaluate(small_config("empty")), EmptyInputError);
}

TEST_CASE("agreement from a ratings CSV") {
  const auto path = testkit::scratch("agree") / "ratings.csv";
  std::string csv = "item_id,rater_id,rating\n";
  for (int i = 0; i < 12; ++i) {
    csv += "i" + std::to_string(i) + ",a," + std::to_string(1 + i % 4) + "\n";
    csv += "i" + std::to_string(i) + ",b," + std::to_string(1 + (i % 5 == 0 ? (i + 1) % 4 : i % 4)) + "\n";
  }
  write_text_file(path, csv);
  const auto out = cmd_agree(path, 4, 100, 1);
  CHECK(out.at("AC1").at("coefficient").get<double>() < 1.0);
  CHECK(out.at("AC2").at("n_items") == 12);
  CHECK(out.at("pairwise_AC1").size() == 1);
  CHECK(cmd_agree(path, 4, 100, 1) == out);
}

TEST_CASE("ingestion filters, scores and imputes raw records") {
  const auto dir = testkit::scratch("ingest");
  auto profiles = load_profiles(testkit::demo_dir() / "profiles.jsonl");
  const NoteSections note{"None known", "Cough", "Four days of productive cough with fever and chills, worse at night.",
                          "COPD", "Smoker", "Father had COPD"};
  std::string raw;
  for (auto& p : profiles) {
    auto r = raw_record_from_profile(p, note);
    if (p.profile_id == "p02") r.note.hpi = "Found in a coma at home by family members who called an ambulance.";
    if (p.profile_id == "p03") r.extracted.erase(std::remove_if(r.extracted.begin(), r.extracted.end(),
                                                                [](auto& kv) { return kv.first == "occupation"; }),
                                                 r.extracted.end());
    raw += raw_record_to_json(r).dump() + "\n";
  }
  write_text_file(dir / "raw.jsonl", raw);

  auto cfg = small_config("ingest-out", {{"raw_records", (dir / "raw.jsonl").string()}});
  const json extract{{"demographics", {{"occupation", "Not recorded"}, {"living_situation", "Alone"}, {"children", "None"}}},
                     {"social_history",
                      {{"exercise", "None"}, {"tobacco", "Smoker"}, {"alcohol", "None"}, {"illicit_drug", "None"},
                       {"sexual_history", "Not recorded"}}},
                     {"allergies", "None known"},
                     {"medical_history", "COPD"},
                     {"family_medical_history", "Father had COPD"},
                     {"medical_device", "Not recorded"},
                     {"present_illness", {{"positive", "cough"}, {"negative", "Not recorded"}}}};
  const json impute{{"demographics", {{"occupation", "Teacher"}, {"living_situation", "Alone"}, {"children", "None"}}},
                    {"social_history",
                     {{"exercise", "None"}, {"tobacco", "Smoker"}, {"alcohol", "None"}, {"illicit_drug", "None"},
                      {"sexual_history", "Not sexually active"}}}};
  testkit::ScriptedJudge judge(json{
      {"rules", json::array({
                    {{"when", {{"var_equals", {{"kind", "note_extract"}}}}}, {"respond", extract.dump()}},
                    {{"when", {{"var_equals", {{"kind", "note_filter"}}}, {"var_regex", {{"diagnosis", "migraine"}}}}},
                     {"respond", R"({"explanation": "Does not fit.", "likelihood_rating": 2})"}},
                    {{"when", {{"var_equals", {{"kind", "note_filter"}}}}},
                     {"respond", R"({"explanation": "Fits.", "likelihood_rating": 4})"}},
                    {{"when", {{"var_equals", {{"kind", "note_impute"}}}}}, {"respond", impute.dump()}},
                })}});
  const auto s = cmd_ingest(cfg, *judge);
  CHECK(s.records == 5);
  CHECK(s.accepted == 3);
  CHECK(s.rejected == 2);
  const auto accepted = load_profiles(cfg.out / "profiles.jsonl");
  REQUIRE(accepted.size() == 3);
  const auto& p03 = *std::find_if(accepted.begin(), accepted.end(), [](auto& p) { return p.profile_id == "p03"; });
  CHECK(p03.occupation == "Teacher");
  CHECK(p03.tobacco == profiles[2].tobacco);  // valid data is never replaced
  const auto rejections = split_lines(read_text_file(cfg.out / "ingest_rejections.jsonl"));
  REQUIRE(rejections.size() == 2);
  CHECK(json::parse(rejections[0]).at("reason").get<std::string>().find("excluded_consciousness") !=
        std::string::npos);
  CHECK(json::parse(rejections[1]).at("alignment_score") == 2);

  auto no_raw = small_config("ingest-none");
  CHECK_THROWS_AS(cmd_ingest(no_raw, *judge), ConfigError);
}
