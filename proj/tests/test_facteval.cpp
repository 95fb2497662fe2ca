#include <doctest.h>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/facteval.hpp"

using namespace medsim;
using nlohmann::json;

namespace {

json demo_judge_script() { return json::parse(read_text_file(testkit::demo_dir() / "judge.script.json")); }

Transcript chatty_transcript() {
  const auto persona = *parse_persona_code("neutral-B-high-normal");
  static const auto lex = testkit::demo_lexicons();
  FixedClock clock;
  ConsultationSession s("fact", testkit::sample_profile(), persona, sample_cefr_words(lex, persona.language, 3), {},
                        clock);
  s.add_doctor_turn("Do you smoke or drink?");
  s.add_patient_turn(
      "I smoke a pack a day. I never drink alcohol. My grandmother had this too. The weather is nice. Thank you. "
      "Is it serious?");
  s.add_doctor_turn("[DDX] Pneumonia");
  s.add_patient_turn("Okay.");
  return s.transcript();
}

}  // namespace

TEST_CASE("category and label names round trip") {
  for (auto c : {SentenceCategory::politeness, SentenceCategory::emotion, SentenceCategory::inquiry,
                 SentenceCategory::meta_information, SentenceCategory::information}) {
    CHECK(parse_category(category_name(c)) == c);
  }
  CHECK(parse_category("meta_information") == SentenceCategory::meta_information);
  CHECK(parse_nli_label("contradiction") == NliLabel::contradiction);
  CHECK_FALSE(parse_nli_label("maybe"));
}

TEST_CASE("factuality pipeline over a scripted judge") {
  testkit::ScriptedJudge judge(demo_judge_script());
  const auto t = chatty_transcript();
  const auto verdicts = evaluate_factuality(t, testkit::sample_profile(), *judge, 3);
  REQUIRE(verdicts.size() == 7);

  const auto& smoke = verdicts[0];
  CHECK(smoke.category == SentenceCategory::information);
  CHECK(linked_keys(smoke.links) == std::vector<ItemKey>{ItemKey::tobacco});
  CHECK(smoke.nli.at(ItemKey::tobacco) == NliLabel::entailment);
  CHECK(smoke.entailed());
  CHECK_FALSE(smoke.unsupported);
  CHECK_FALSE(smoke.plausibility);

  const auto& drink = verdicts[1];
  CHECK(drink.nli.at(ItemKey::alcohol) == NliLabel::contradiction);
  CHECK(drink.contradicted());

  const auto& grandma = verdicts[2];
  CHECK_FALSE(grandma.supported);
  CHECK(grandma.unsupported_rule == UnsupportedRule::all_neutral);
  CHECK(grandma.plausibility == 3);

  const auto& weather = verdicts[3];
  CHECK(link_count(weather.links) == 0);
  CHECK(weather.unsupported_rule == UnsupportedRule::no_link);
  CHECK(weather.audit.empty());

  CHECK(verdicts[4].category == SentenceCategory::politeness);
  CHECK(verdicts[5].category == SentenceCategory::inquiry);
  CHECK(verdicts[6].turn_index == 3);
  for (auto& v : verdicts) CHECK(validate_verdict(v).ok());

  const auto s = summarize_factuality(verdicts);
  CHECK(s.counts.n_sentences == 7);
  CHECK(s.counts.n_info == 5);  // "Okay." is information too
  CHECK(s.counts.n_supported == 2);
  CHECK(s.counts.n_entail == 1);
  CHECK(s.counts.n_contradict == 1);
  CHECK(*s.micro.entail_rate == doctest::Approx(0.5));
  CHECK(*s.micro.mean_plausibility == doctest::Approx(3.0));
  CHECK(validate_summary(s).ok());
}

TEST_CASE("linkage is restricted to information sentences") {
  testkit::ScriptedJudge judge(demo_judge_script());
  CHECK_THROWS_AS(link_items("", "Thanks", SentenceCategory::politeness, *judge), PreconditionError);
  CHECK(judge.calls() == 0);
}

TEST_CASE("missing linkage answers are audited as unlinked") {
  testkit::ScriptedJudge judge(json{{"default", R"([{"category": "tobacco", "explanation": "x", "prediction": 1}])"}});
  const auto r = link_items("", "I smoke.", SentenceCategory::information, *judge);
  CHECK(link_count(r.links) == 1);
  CHECK(r.audit.size() == kLinkageCount - 1);
}

TEST_CASE("NLI answers must match the linked items") {
  testkit::ScriptedJudge judge(json{{"default", R"([{"profile": "a", "explanation": "x", "entailment_prediction": 1}])"}});
  const std::vector<std::pair<ItemKey, std::string>> items{{ItemKey::tobacco, "x"}, {ItemKey::alcohol, "y"}};
  CHECK_THROWS_AS(nli_verdicts("", "s", items, *judge), JudgeFormatError);
  CHECK_THROWS_AS(nli_verdicts("", "s", {}, *judge), PreconditionError);
}

TEST_CASE("unsupported rules short-circuit the judge") {
  testkit::ScriptedJudge judge(json{{"default", R"({"explanation": "new detail", "prediction": 1})"}});
  LinkVector none{};
  auto r = detect_unsupported("", "s", none, {}, "", *judge);
  CHECK(r.rule == UnsupportedRule::no_link);
  LinkVector one{};
  one[0] = 1;
  r = detect_unsupported("", "s", one, {{ItemKey::age, NliLabel::neutral}}, "", *judge);
  CHECK(r.rule == UnsupportedRule::all_neutral);
  CHECK(judge.calls() == 0);
  r = detect_unsupported("", "s", one, {{ItemKey::age, NliLabel::entailment}}, "", *judge);
  CHECK(r.rule == UnsupportedRule::judge);
  CHECK(r.judge_called);
  CHECK(judge.calls() == 1);
}

TEST_CASE("verdicts persist as JSONL") {
  testkit::ScriptedJudge judge(demo_judge_script());
  const auto verdicts = evaluate_factuality(chatty_transcript(), testkit::sample_profile(), *judge);
  const auto path = testkit::scratch("verdicts") / "fact.jsonl";
  save_verdicts(path, verdicts);
  const auto back = load_verdicts(path);
  REQUIRE(back.size() == verdicts.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(verdict_to_json(back[i]) == verdict_to_json(verdicts[i]));
}

TEST_CASE("rates with empty denominators are absent") {
  FactualityCounts c;
  c.n_sentences = 3;
  const auto r = factuality_rates(c);
  CHECK(*r.info_share == 0.0);
  CHECK_FALSE(r.entail_rate);
  CHECK_FALSE(r.mean_plausibility);
}

TEST_CASE("macro rates average per dialogue") {
  auto mk = [](std::string sid, bool entailed) {
    SentenceVerdict v;
    v.session_id = std::move(sid);
    v.category = SentenceCategory::information;
    v.links[0] = 1;
    v.supported = true;
    v.nli[ItemKey::age] = entailed ? NliLabel::entailment : NliLabel::contradiction;
    return v;
  };
  // Dialogue a: 3 of 3 entailed. Dialogue b: 0 of 1.
  const auto s = summarize_factuality({mk("a", true), mk("a", true), mk("a", true), mk("b", false)});
  CHECK(*s.micro.entail_rate == doctest::Approx(0.75));
  CHECK(*s.macro.entail_rate == doctest::Approx(0.5));
  CHECK(s.counts.n_dialogues == 2);
}
