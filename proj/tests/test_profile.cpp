#include <doctest.h>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/profile.hpp"

using namespace medsim;
using nlohmann::json;

TEST_CASE("profile JSON round trip keeps absent values distinct from empty") {
  auto p = testkit::sample_profile();
  auto j = profile_to_json(p);
  CHECK(j.at("sexual_history") == "Not recorded");
  CHECK(profile_from_json(j) == p);
  p.medications.reset();
  CHECK(profile_to_json(p).at("medication") == "Not recorded");
  CHECK(profile_from_json(profile_to_json(p)) == p);
}

TEST_CASE("profile parsing rejects unknown fields and wrong types") {
  auto j = profile_to_json(testkit::sample_profile());
  j["shoe_size"] = 10;
  CHECK_THROWS_AS(profile_from_json(j), ParseError);
  j.erase("shoe_size");
  j["medication"] = 5;
  try {
    profile_from_json(j);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.path() == "medication");
  }
}

TEST_CASE("validate_profile reports ranges and empty strings") {
  auto p = testkit::sample_profile();
  CHECK(validate_profile(p).ok());
  p.pain = 11;
  p.tobacco = "";
  p.medications = std::vector<std::string>(16, "x");
  const auto v = validate_profile(p);
  CHECK(v.violations.size() == 3);
}

TEST_CASE("item accessors and groups") {
  const auto p = testkit::sample_profile();
  CHECK(item_text(p, ItemKey::age) == "67");
  CHECK(item_text(p, ItemKey::sexual_history) == std::nullopt);
  CHECK(item_text(p, ItemKey::medication) == "Albuterol inhaler; Lisinopril");
  CHECK(group_members(ItemGroup::social).size() == 10);
  CHECK(group_members(ItemGroup::pmh).size() == 4);
  CHECK(group_members(ItemGroup::current_visit).size() == 5);
  CHECK(linkage_items().size() == 23);
  CHECK(hidden_from_doctor(ItemKey::diagnosis));
  CHECK(hidden_from_doctor(ItemKey::disposition));
  CHECK_FALSE(hidden_from_doctor(ItemKey::pain));
  for (auto key : all_items()) CHECK(parse_item(item_name(key)) == key);
}

TEST_CASE("profiles load from JSON lines, arrays and single objects") {
  const auto dir = testkit::scratch("profiles");
  const std::vector<PatientProfile> ps{testkit::sample_profile("a"), testkit::sample_profile("b")};
  save_profiles(dir / "p.jsonl", ps);
  CHECK(load_profiles(dir / "p.jsonl") == ps);
  write_text_file(dir / "arr.json", json::array({profile_to_json(ps[0]), profile_to_json(ps[1])}).dump());
  CHECK(load_profiles(dir / "arr.json") == ps);
  write_text_file(dir / "one.json", profile_to_json(ps[0]).dump(2));
  CHECK(load_profiles(dir / "one.json").size() == 1);
}

TEST_CASE("cohort filter converts pain and keeps upstream extractions") {
  RawRecord r;
  r.record_id = "r1";
  r.age = 50;
  r.gender = "M";
  r.race = "Asian";
  r.marital_status = "Single";
  r.insurance = "Private";
  r.chiefcomplaint = "Back pain";
  r.arrival_transport = "WALK IN";
  r.disposition = "HOME";
  r.diagnosis = "Lumbar strain";
  r.pain = "6.6";
  r.note.hpi = "Lifting boxes at work yesterday, sudden low back pain without leg weakness.";
  r.extracted = {{"tobacco", "Never"}};
  const auto out = apply_cohort_filters(r);
  REQUIRE(out.accepted);
  CHECK(out.normalized->pain == 7);
  CHECK(out.normalized->tobacco == "Never");
  CHECK_FALSE(out.notes.empty());
}

TEST_CASE("exclusion keywords match whole phrases only") {
  RawRecord r;
  r.record_id = "r2";
  r.age = 50;
  r.gender = "M";
  r.race = "x";
  r.marital_status = "x";
  r.insurance = "x";
  r.chiefcomplaint = "Comatose feeling";  // not the word "coma"
  r.arrival_transport = "x";
  r.disposition = "x";
  r.diagnosis = "x";
  r.pain = "0";
  r.note.hpi = "one two three four five six seven eight nine ten eleven";
  CHECK(apply_cohort_filters(r).accepted);
  r.chiefcomplaint = "Coma";
  CHECK_FALSE(apply_cohort_filters(r).accepted);
}

TEST_CASE("CEFR word sampling is seeded and level-aware") {
  const auto lex = testkit::demo_lexicons();
  const auto a = sample_cefr_words(lex, CefrLevel::A, 3);
  CHECK(a == sample_cefr_words(lex, CefrLevel::A, 3));
  CHECK(a.understand_words.size() == kWordsPerSlot);
  CHECK(a.misunderstand_words.size() == kWordsPerSlot);
  CHECK_FALSE(a == sample_cefr_words(lex, CefrLevel::A, 4));
  CHECK(word_sample_from_json(word_sample_to_json(a)) == a);
  std::vector<CefrLexicon> only_b{lex[1]};
  CHECK_THROWS_AS(sample_cefr_words(only_b, CefrLevel::A, 1), LexiconError);
}

TEST_CASE("profile slots expose every field") {
  const auto s = profile_slots(testkit::sample_profile());
  CHECK(s.at("chiefcomplaint") == "Cough");
  CHECK(s.at("sexual_history") == "Not recorded");
  CHECK(s.at("pain") == "4");
  const auto sec = render_profile_sections(testkit::sample_profile());
  CHECK(sec.background.find("Smokes one pack per day") != std::string::npos);
  CHECK(sec.current_visit.find("Diagnosis: Pneumonia") != std::string::npos);
}
