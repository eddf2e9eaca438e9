#include <doctest.h>

#include <sstream>

#include "geomrel/corpus.hpp"
#include "geomrel/error.hpp"

using namespace geomrel;

namespace {

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_corpus(in, "test");
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("form and label names") {
  CHECK(parse_form("math") == Form::Math);
  CHECK(parse_form("FACT") == Form::Fact);
  CHECK(parse_label("u") == Label::Unanswerable);
  CHECK(parse_label("ANSWERABLE") == Label::Answerable);
  CHECK_THROWS_AS(parse_form("poetry"), Error);
  CHECK(to_string(Form::Code) == "CODE");
  CHECK(form_letter(Form::Fact) == 'f');
}

TEST_CASE("parse_corpus reads records and skips comments") {
  const auto c = parse(
      "# header\n"
      "\n"
      "m01a|MATH|A|m01|What is 2+2?\n"
      "m01u|MATH|U|m01|What is 2+x | x unknown?\n");
  REQUIRE(c.size() == 2);
  CHECK(c.records()[0].id == "m01a");
  CHECK(c.records()[1].text == "What is 2+x | x unknown?");
  CHECK(c.at("m01u").label == Label::Unanswerable);
  CHECK(c.find("m02a") == nullptr);
  CHECK(c.pair_count(Form::Math) == 1);
}

TEST_CASE("empty input is a valid empty corpus") {
  const auto c = parse("");
  CHECK(c.empty());
  CHECK(validate_pairs(c).empty());
}

TEST_CASE("duplicate id is a validation error") {
  try {
    parse("m01a|MATH|A|m01|one\nm01a|MATH|A|m01|two\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Validation);
    CHECK(std::string(e.what()).find("m01a") != std::string::npos);
  }
}

TEST_CASE("malformed lines report the line number") {
  try {
    parse("m01a|MATH|A|m01|ok\nm01u|MATH|U\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("test:2") != std::string::npos);
  }
}

TEST_CASE("record invariants") {
  CHECK_THROWS_AS(parse("m01a|MATH|U|m01|suffix disagrees\n"), Error);
  CHECK_THROWS_AS(parse("f01a|MATH|A|f01|letter disagrees\n"), Error);
  CHECK_THROWS_AS(parse("m01a|MATH|A|m01|\n"), Error);
  CHECK_THROWS_AS(parse("m01a|MATH|A||text\n"), Error);
  CHECK_THROWS_AS(parse("M01A|MATH|A|m01|text\n"), Error);
}

TEST_CASE("validate_pairs names the pair and the rule") {
  SUBCASE("two A records") {
    const auto v = validate_pairs(parse("m01a|MATH|A|m01|What is 2+2?\nm02a|MATH|A|m01|What is 3+3?\n"));
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("m01") != std::string::npos);
  }
  SUBCASE("length ratio") {
    const std::string long_text(600, 'x');
    const auto v = validate_pairs(parse("m01a|MATH|A|m01|What is 2+2?\nm01u|MATH|U|m01|" + long_text + "\n"));
    REQUIRE(v.size() == 1);
    CHECK(any_contains(v, "m01"));
    CHECK(any_contains(v, "length"));
  }
  SUBCASE("mixed forms") {
    const auto v = validate_pairs(parse("m01a|MATH|A|p1|What is 2+2?\nf01u|FACT|U|p1|What is 2+x?\n"));
    CHECK(any_contains(v, "p1"));
  }
  SUBCASE("singleton pair") {
    const auto v = validate_pairs(parse("m01a|MATH|A|m01|What is 2+2?\n"));
    CHECK(any_contains(v, "m01"));
  }
  SUBCASE("ratio measured in code points") {
    // 4 code points vs 8 code points; the byte ratio would be larger
    const auto c = parse("m01a|MATH|A|m01|ππππ\nm01u|MATH|U|m01|abcdefgh\n");
    CHECK(validate_pairs(c, PairRules{2.0}).empty());
    CHECK(utf8_length("ππππ") == 4);
  }
}

TEST_CASE("write then parse is identity") {
  const auto c = parse(
      "c01a|CODE|A|c01|What does max([3, 1]) return?\n"
      "c01u|CODE|U|c01|What does max([]) return?\n"
      "f01a|FACT|A|f01|Capital of France?\n"
      "f01u|FACT|U|f01|Capital of Atlantis?\n");
  std::ostringstream out;
  write_corpus(c, out);
  const auto back = parse(out.str());
  CHECK(back.records() == c.records());
}

TEST_CASE("resolve_records keeps order and rejects unknown ids") {
  const auto c = parse("m01a|MATH|A|m01|a\nm01u|MATH|U|m01|b\n");
  const auto r = resolve_records({"m01u", "m01a"}, c);
  CHECK(r[0].id == "m01u");
  CHECK_THROWS_AS(resolve_records({"m09a"}, c), Error);
}

TEST_CASE("shipped corpora: 50/10/30 pairs and no violations") {
  const auto dir = std::filesystem::path(GEOMREL_DATA_DIR) / "corpus";
  const auto math = load_corpus(dir / "math.txt");
  CHECK(math.size() == 100);
  CHECK(math.pair_count(Form::Math) == 50);
  const auto all = load_corpus(dir);
  CHECK(all.pair_count(Form::Fact) == 10);
  CHECK(all.pair_count(Form::Code) == 30);
  CHECK(validate_pairs(all).empty());
  // published examples kept verbatim
  CHECK(all.at("m07u").text == "What is the next prime number after the largest prime number?");
  CHECK(all.at("m10u").text == "What is the value of π for a square?");
}

TEST_CASE("missing file is an I/O error") {
  try {
    load_corpus("/nonexistent/corpus.txt");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}
