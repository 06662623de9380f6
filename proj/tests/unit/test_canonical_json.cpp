#include <doctest.h>

#include <random>

#include "smartcity/canonical_json.hpp"

using namespace smartcity;

TEST_CASE("canonical form sorts keys and drops whitespace") {
  const Json j = parse_json(R"({ "b": 1, "a": {"z": [1, 2], "y": "x"}, "c": null })");
  CHECK(canonical_dump(j) == R"({"a":{"y":"x","z":[1,2]},"b":1,"c":null})");
}

TEST_CASE("canonical form orders keys bytewise, not by locale") {
  const Json j = Json{{"b", 1}, {"B", 2}, {"_", 3}, {"\xc3\xa9", 4}};
  CHECK(canonical_dump(j) == "{\"B\":2,\"_\":3,\"b\":1,\"\xc3\xa9\":4}");
}

TEST_CASE("floats are rejected anywhere in the value") {
  CHECK_THROWS_AS(canonical_dump(Json{{"a", Json::array({1, 2.5})}}), CanonicalError);
  try {
    canonical_dump(1.0);
    FAIL("expected a throw");
  } catch (const CanonicalError& e) {
    CHECK(e.code() == CanonicalErrc::FloatingPoint);
  }
}

TEST_CASE("parse_canonical accepts only byte-exact canonical text") {
  CHECK(parse_canonical(R"({"a":1,"b":[true,false]})") == Json{{"a", 1}, {"b", {true, false}}});
  CHECK_THROWS_AS(parse_canonical(R"({"b":1,"a":1})"), CanonicalError);
  CHECK_THROWS_AS(parse_canonical(R"({"a": 1})"), CanonicalError);
  CHECK_THROWS_AS(parse_canonical("{\"a\":1}\n"), CanonicalError);
  CHECK_THROWS_AS(parse_canonical("{\"a\":1.5}"), CanonicalError);
  CHECK_THROWS_AS(parse_canonical("{"), CanonicalError);
}

TEST_CASE("canonical_violation names the problem") {
  CHECK_FALSE(canonical_violation(R"({"a":1})").has_value());
  CHECK(canonical_violation("{").value() == "not-json");
  CHECK(canonical_violation("[0.5]").value() == "float");
  CHECK(canonical_violation(R"({"b":1,"a":2})").value() == "non-canonical");
}

TEST_CASE("non-ASCII strings round-trip as raw UTF-8") {
  const std::string text = "{\"city\":\"M\xc3\xbcnchen\"}";
  CHECK(canonical_dump(parse_json(text)) == text);
  CHECK(canonical_dump(parse_json(R"({"city":"München"})")) == text);
}

TEST_CASE("property: canonical_dump is idempotent through parse") {
  std::mt19937_64 rng(42);
  const auto random_value = [&](auto& self, int depth) -> Json {
    switch (depth > 3 ? rng() % 4 : rng() % 6) {
      case 0: return static_cast<std::int64_t>(rng()) >> (rng() % 64);
      case 1: return std::string(rng() % 6, static_cast<char>('a' + rng() % 26));
      case 2: return rng() % 2 == 0;
      case 3: return nullptr;
      case 4: {
        Json a = Json::array();
        for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) a.push_back(self(self, depth + 1));
        return a;
      }
      default: {
        Json o = Json::object();
        for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) {
          o[std::string(1 + rng() % 3, static_cast<char>('a' + rng() % 5))] = self(self, depth + 1);
        }
        return o;
      }
    }
  };
  for (int i = 0; i < 500; ++i) {
    const Json v = random_value(random_value, 0);
    const std::string once = canonical_dump(v);
    CHECK(canonical_dump(parse_canonical(once)) == once);
    CHECK(parse_canonical(once) == v);
  }
}
