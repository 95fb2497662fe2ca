#include <doctest.h>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/stats.hpp"

using namespace medsim;
using nlohmann::json;

namespace {

RatingMatrix two_raters(const std::vector<std::pair<int, int>>& rows) {
  std::vector<RatingMatrix::Entry> entries;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    entries.push_back({"i" + std::to_string(i), "a", rows[i].first});
    entries.push_back({"i" + std::to_string(i), "b", rows[i].second});
  }
  return RatingMatrix::from_entries(entries);
}

std::size_t slot(ItemKey key) {
  const auto& items = linkage_items();
  return static_cast<std::size_t>(std::find(items.begin(), items.end(), key) - items.begin());
}

}  // namespace

TEST_CASE("agreement weights") {
  CHECK(agreement_weight(AcMethod::ac1, 2, 2, 4) == 1.0);
  CHECK(agreement_weight(AcMethod::ac1, 2, 3, 4) == 0.0);
  CHECK(agreement_weight(AcMethod::ac2, 1, 2, 4) == doctest::Approx(2.0 / 3));
  CHECK(agreement_weight(AcMethod::ac2, 1, 4, 4) == 0.0);
}

TEST_CASE("Gwet coefficients on a hand-computed example") {
  // Observed agreement 3/4; prevalences 3/8, 3/8, 2/8, 0 give chance
  // agreement 14/64 for AC1. With linear weights observed agreement is 11/12
  // and chance agreement is (28/3) / 12 * 42/64.
  const auto m = two_raters({{1, 1}, {2, 2}, {3, 3}, {1, 2}});
  CHECK(gwet_coefficient(m, AcMethod::ac1) == doctest::Approx((0.75 - 14.0 / 64) / (1 - 14.0 / 64)));
  const double pe2 = 28.0 / 36 * 42.0 / 64;
  CHECK(gwet_coefficient(m, AcMethod::ac2) == doctest::Approx((11.0 / 12 - pe2) / (1 - pe2)));
}

TEST_CASE("items rated once do not count") {
  auto entries = std::vector<RatingMatrix::Entry>{{"x", "a", 1}, {"x", "b", 1}, {"y", "a", 2}, {"y", "b", 2},
                                                  {"z", "a", 4}};
  const auto m = RatingMatrix::from_entries(entries);
  CHECK(m.n_items() == 3);
  CHECK(gwet_coefficient(m, AcMethod::ac1) == doctest::Approx(1.0));
  CHECK(m.pair(0, 1).n_items() == 2);
  CHECK_THROWS_AS(gwet_coefficient(two_raters({{1, 1}}), AcMethod::ac1), InsufficientDataError);
}

TEST_CASE("rating input validation") {
  CHECK_THROWS_AS(RatingMatrix::from_entries({{"x", "a", 1}, {"x", "a", 2}}), ParseError);
  CHECK_THROWS_AS(RatingMatrix::from_entries({{"x", "a", 5}}), ParseError);
  const auto dir = testkit::scratch("ratings");
  write_text_file(dir / "r.csv", "item_id,rater_id,rating\nx,a,1\nx,b,2\ny,a,3\ny,b,3\n");
  const auto m = RatingMatrix::load_csv(dir / "r.csv");
  CHECK(m.rater_ids == std::vector<std::string>{"a", "b"});
  CHECK(m.ratings[0][1] == 2);
  write_text_file(dir / "bad.csv", "x,a\n");
  CHECK_THROWS_AS(RatingMatrix::load_csv(dir / "bad.csv"), ParseError);
}

TEST_CASE("bootstrap intervals bracket the estimate and are seeded") {
  const auto m = two_raters({{1, 1}, {2, 2}, {3, 3}, {1, 2}, {4, 4}, {2, 2}, {3, 4}, {1, 1}, {2, 3}, {4, 4}});
  const auto a = gwet_ac(m, AcMethod::ac1, 300, 7);
  const auto b = gwet_ac(m, AcMethod::ac1, 300, 7, 3);
  CHECK(a.coefficient == b.coefficient);
  CHECK(a.ci_low == b.ci_low);
  CHECK(a.ci_high == b.ci_high);
  CHECK(*a.ci_low <= a.coefficient);
  CHECK(a.coefficient <= *a.ci_high);
  CHECK(a.n_valid <= 300);
  CHECK(a.n_items == 10);
  const auto pairs = pairwise_agreement(m, AcMethod::ac1, 50, 7);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].rater_a == "a");
  CHECK(agreement_to_json(pairs[0]).at("rater_b") == "b");
}

TEST_CASE("quantiles interpolate linearly") {
  CHECK(quantile({4, 1, 3, 2}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.9) == 5.0);
}

TEST_CASE("DDx accuracy counts judge verdicts") {
  testkit::ScriptedJudge judge(json::parse(read_text_file(testkit::demo_dir() / "judge.script.json")));
  const auto acc = ddx_accuracy({{"c1", {"Pneumonia", "Flu"}, "Pneumonia"}, {"c2", {"Migraine"}, "Pneumonia"}}, *judge);
  CHECK(acc.n == 2);
  CHECK(acc.n_correct == 1);
  CHECK(acc.rate == 0.5);
  CHECK(acc.verdicts.at("c1"));
  CHECK_FALSE(acc.verdicts.at("c2"));
}

TEST_CASE("classifier validation alignment and F1 edges") {
  CHECK_FALSE(f1_score(std::nullopt, 0.5));
  CHECK(*f1_score(0.0, 0.0) == 0.0);
  CHECK(*f1_score(0.5, 1.0) == doctest::Approx(2.0 / 3));

  GoldSentence g;
  g.session_id = "s";
  g.information = true;
  g.links = {ItemKey::tobacco};
  g.nli = {{ItemKey::tobacco, NliLabel::entailment}};
  SentenceVerdict p;
  p.session_id = "s";
  p.category = SentenceCategory::information;
  p.links[slot(ItemKey::tobacco)] = 1;
  p.links[slot(ItemKey::alcohol)] = 1;
  p.nli = {{ItemKey::tobacco, NliLabel::entailment}, {ItemKey::alcohol, NliLabel::neutral}};
  const auto v = classifier_validation({g}, {p});
  CHECK(*v.accuracy == 1.0);
  CHECK(*v.p_item == 0.5);
  CHECK(*v.r_item == 1.0);
  CHECK(*v.acc_val == 1.0);
  CHECK_FALSE(v.p_unsupp);
  CHECK(classifier_validation_to_json(v).at("p_unsupp").is_null());

  auto other = p;
  other.sentence_index = 1;
  CHECK_THROWS_AS(classifier_validation({g}, {other}), AlignmentError);
  CHECK_THROWS_AS(classifier_validation({g}, {p, p}), AlignmentError);
}
