#include <doctest.h>

#include <atomic>
#include <set>

#include "medsim/error.hpp"
#include "medsim/support.hpp"
#include "medsim/text.hpp"

using namespace medsim;

TEST_CASE("trim, case helpers and word counts") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(to_lower("AbC") == "abc");
  CHECK(capitalize_first("hello") == "Hello");
  CHECK(contains_ci("Slurred Speech noted", "slurred speech"));
  CHECK(word_count("  one two\tthree\n") == 3);
  CHECK(word_count("") == 0);
  CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
  CHECK(collapse_whitespace("a  \n b") == "a b");
}

TEST_CASE("render_slots substitutes and rejects missing slots") {
  CHECK(render_slots("Hi {{name}}, {{name}}!", {{"name", "Ann"}}) == "Hi Ann, Ann!");
  CHECK(render_slots(R"({"a": {"b": 1}} {{x}})", {{"x", "y"}}) == R"({"a": {"b": 1}} y)");
  CHECK_THROWS_AS(render_slots("{{missing}}", {}), TemplateError);
  try {
    render_slots("{{missing}}", {}, "tmpl");
  } catch (const TemplateError& e) {
    CHECK(e.slot() == "missing");
  }
  CHECK(slot_names("{{a}} {{b}} {{a}}") == std::set<std::string>{"a", "b"});
}

TEST_CASE("sha256 and stable hashing") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(stable_hash("x") == stable_hash("x"));
  CHECK(stable_hash("x") != stable_hash("y"));
  CHECK(splitmix64(1) != splitmix64(2));
}

TEST_CASE("Rng draws are reproducible and bounded") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    auto x = a.below(7);
    CHECK(x == b.below(7));
    CHECK(x < 7);
  }
}

TEST_CASE("FixedClock advances by its step") {
  FixedClock c(100, 10);
  CHECK(c.now_ms() == 100);
  CHECK(c.now_ms() == 110);
}

TEST_CASE("parallel_for visits every index and rethrows") {
  std::vector<int> seen(50, 0);
  parallel_for(seen.size(), 4, [&](std::size_t i) { seen[i] += 1; });
  for (int v : seen) CHECK(v == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) { if (i == 4) throw PreconditionError("boom"); }),
                  PreconditionError);
}

TEST_CASE("text files round trip") {
  const auto p = std::filesystem::temp_directory_path() / "medsim-text-roundtrip" / "a.txt";
  write_text_file(p, "hello\n");
  CHECK(read_text_file(p) == "hello\n");
  CHECK_THROWS(read_text_file(p.parent_path() / "missing.txt"));
}
