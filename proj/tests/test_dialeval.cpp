#include <doctest.h>

#include "common.hpp"
#include "medsim/dialeval.hpp"
#include "medsim/error.hpp"

using namespace medsim;
using nlohmann::json;

namespace {

json demo_judge_script() { return json::parse(read_text_file(testkit::demo_dir() / "judge.script.json")); }

}  // namespace

TEST_CASE("coverage items span the three groups") {
  CHECK(coverage_items().size() == 19);
  CHECK(group_members(ItemGroup::social).size() == 10);
  CHECK(group_members(ItemGroup::pmh).size() == 4);
  CHECK(group_members(ItemGroup::current_visit).size() == 5);
}

TEST_CASE("extraction, overlap and scoring against a scripted judge") {
  testkit::ScriptedJudge judge(demo_judge_script());
  const auto profile = testkit::sample_profile();
  const auto t = testkit::short_transcript(profile, *parse_persona_code("neutral-B-high-normal"));
  const auto derived = extract_profile(t, *judge);
  CHECK(derived.get(ItemKey::tobacco) == "Discussed smoking");
  CHECK_FALSE(derived.get(ItemKey::occupation));
  CHECK(derived.get(ItemKey::present_illness) ==
        "positive: Symptoms possibly after eating; negative (denied): Not recorded");
  CHECK(derived_from_json(derived_to_json(derived)).values == derived.values);

  const auto overlap = overlap_items(profile, derived);
  CHECK(overlap == std::vector<ItemKey>{ItemKey::tobacco, ItemKey::alcohol, ItemKey::family_medical_history,
                                        ItemKey::present_illness, ItemKey::chief_complaint, ItemKey::pain,
                                        ItemKey::medication});
  const auto scores = score_overlap(profile, derived, *judge);
  CHECK(scores.at(ItemKey::alcohol).score == 1);
  CHECK(scores.at(ItemKey::pain).score == 4);
  CHECK(scores.at(ItemKey::medication).score == 3);

  std::map<ItemKey, int> flat;
  for (auto& [k, s] : scores) flat[k] = s.score;
  const auto report = compute_coverage({profile}, {derived}, {flat});
  const auto& social = report.groups.at(ItemGroup::social);
  CHECK(social.icov == doctest::Approx(0.2));
  CHECK(*social.icon == doctest::Approx(2.5));
  CHECK(*social.weighted_icon == doctest::Approx(0.5));
  CHECK(report.groups.at(ItemGroup::pmh).icov == doctest::Approx(0.25));
  CHECK(*report.groups.at(ItemGroup::current_visit).icon == doctest::Approx(3.25));
  CHECK(report.overall.icov == doctest::Approx(7.0 / 19));
  CHECK(*report.overall.icon == doctest::Approx(3.0));
  CHECK(validate_coverage(report).ok());
}

TEST_CASE("extraction needs a finished session") {
  testkit::ScriptedJudge judge(demo_judge_script());
  auto t = testkit::short_transcript(testkit::sample_profile(), *parse_persona_code("neutral-B-high-normal"));
  t.termination.reset();
  CHECK_THROWS_AS(extract_profile(t, *judge), PreconditionError);
}

TEST_CASE("scoring requires an answer for every key") {
  testkit::ScriptedJudge judge(json{{"default", R"({"pain": "[REASON]: ok, [RESULT]: 4"})"}});
  CHECK_THROWS_AS(score_items({{"pain", "4"}, {"tobacco", "yes"}}, {{"pain", "4"}, {"tobacco", "yes"}}, *judge),
                  JudgeFormatError);
  CHECK_THROWS_AS(score_items({}, {{"pain", "4"}}, *judge), PreconditionError);
}

TEST_CASE("coverage over dialogues with empty overlaps") {
  const std::vector<ItemKey> items{ItemKey::tobacco, ItemKey::alcohol};
  std::vector<DialogueCoverage> ds(3);
  ds[0].scores = {{ItemKey::tobacco, 4}, {ItemKey::alcohol, 2}};
  ds[1].scores = {{ItemKey::pain, 1}};  // outside the group
  ds[2].scores = {{ItemKey::alcohol, 1}};
  const auto g = coverage_over(ds, items);
  CHECK(g.n_dialogues == 3);
  CHECK(g.n_icon_dialogues == 2);
  CHECK(g.icov == doctest::Approx(0.5));
  CHECK(*g.icon == doctest::Approx(2.0));
  const auto empty = coverage_over({ds[1]}, items);
  CHECK(empty.icov == 0.0);
  CHECK_FALSE(empty.icon);
}

TEST_CASE("coverage inputs must align") {
  DerivedProfile d;
  d.profile_id = "other";
  CHECK_THROWS_AS(compute_coverage({testkit::sample_profile()}, {}, {}), AlignmentError);
  CHECK_THROWS_AS(compute_coverage({testkit::sample_profile()}, {d}, {{}}), AlignmentError);
}
