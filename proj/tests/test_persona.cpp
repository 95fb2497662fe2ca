#include <doctest.h>

#include <set>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/persona.hpp"

using namespace medsim;
using nlohmann::json;

TEST_CASE("persona codes round trip for the whole product") {
  for (auto& p : persona_product()) CHECK(parse_persona_code(persona_code(p)) == p);
  CHECK(persona_code({Personality::overly_positive, CefrLevel::C, Recall::low, Confusion::normal}) ==
        "overly_positive-C-low-normal");
  CHECK_FALSE(parse_persona_code("neutral-B-high"));
  CHECK_FALSE(parse_persona_code("angry-B-high-normal"));
}

TEST_CASE("high confusion is only valid with the neutral, intermediate, high-recall persona") {
  CHECK(validate_persona(*parse_persona_code("neutral-B-high-high")).ok());
  const auto bad = validate_persona(*parse_persona_code("verbose-A-low-high"));
  CHECK(bad.violations.size() == 3);
  const auto all = enumerate_personas();
  CHECK(all.back() == *parse_persona_code("neutral-B-high-high"));
  std::set<std::string> codes;
  for (auto& p : all) codes.insert(persona_code(p));
  CHECK(codes.size() == 37);
}

TEST_CASE("persona JSON accepts codes and objects") {
  CHECK(persona_from_json(json("impatient-C-low-normal")) == *parse_persona_code("impatient-C-low-normal"));
  const auto spec = *parse_persona_code("distrustful-A-high-normal");
  CHECK(persona_from_json(persona_to_json(spec)) == spec);
  CHECK_THROWS_AS(persona_from_json(json{{"personality", "neutral"}}), ParseError);
  CHECK_THROWS_AS(persona_from_json(json(3)), ParseError);
}

TEST_CASE("sentence limit depends on personality") {
  CHECK(sent_limit(*parse_persona_code("verbose-B-high-normal")) == kVerboseSentLimit);
  CHECK(sent_limit(*parse_persona_code("neutral-B-high-normal")) == kDefaultSentLimit);
}

TEST_CASE("confusion schedule phases by patient turn") {
  const auto& s = default_confusion_schedule();
  CHECK(s.phase_at(1) == DazedPhase::high);
  CHECK(s.phase_at(5) == DazedPhase::high);
  CHECK(s.phase_at(6) == DazedPhase::moderate);
  CHECK(s.phase_at(10) == DazedPhase::moderate);
  CHECK(s.phase_at(11) == DazedPhase::normal);
  CHECK(s.phase_at(300) == DazedPhase::normal);
}

TEST_CASE("persona fragments embed the sampled vocabulary") {
  const auto lex = testkit::demo_lexicons();
  const auto spec = *parse_persona_code("neutral-A-low-normal");
  const auto words = sample_cefr_words(lex, CefrLevel::A, 11);
  const auto f = persona_fragments(spec, words);
  CHECK(f.language_text.find(words.understand_words[0]) != std::string::npos);
  CHECK(f.language_text.find("{{") == std::string::npos);
  CHECK_FALSE(f.personality_text.empty());
  CHECK_FALSE(f.recall_text.empty());
  CHECK_FALSE(f.confusion_text.empty());
  const auto block = render_persona_block(f);
  CHECK(block.find(f.recall_text) != std::string::npos);
  CHECK_FALSE(build_reminder(spec).empty());
}
