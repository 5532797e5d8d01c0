#include <doctest.h>

#include "sparsepose/config.hpp"
#include "sparsepose/errors.hpp"

using namespace sparsepose;

TEST_CASE("key=value parsing") {
  const KeyValues kv = KeyValues::parse(
      "# comment\n"
      "model.embed_dim = 64\n"
      "\n"
      "train.lr=1e-3   # trailing comment\n"
      "name=walk cycle\n"
      "flag=true\n");
  CHECK(kv.get_int("model.embed_dim", 0) == 64);
  CHECK(kv.get_double("train.lr", 0) == 1e-3);
  CHECK(kv.get_string("name", "") == "walk cycle");
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_int("missing", 7) == 7);
  CHECK_FALSE(kv.has("missing"));
}

TEST_CASE("malformed config values") {
  CHECK_THROWS_AS(KeyValues::parse("novalue\n"), ConfigError);
  const KeyValues kv = KeyValues::parse("a=abc\nb=1.5\nc=maybe\n");
  CHECK_THROWS_AS(kv.get_int("a", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_int("b", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_double("a", 0), ConfigError);
  CHECK_THROWS_AS(kv.get_bool("c", false), ConfigError);
}

TEST_CASE("to_text round trip") {
  KeyValues kv;
  kv.set("b", "2");
  kv.set("a", "x y");
  CHECK(kv.to_text() == "a=x y\nb=2\n");
  CHECK(KeyValues::parse(kv.to_text()).values() == kv.values());
}
