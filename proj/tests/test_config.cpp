#include <doctest.h>

#include "gpais/config.hpp"

using namespace gpais;

TEST_CASE("parsing, comments, and whitespace") {
  const Config cfg = Config::from_string(
      "# a comment\n"
      "dataset.path = /tmp/x.csv   # trailing comment\n"
      "\n"
      "run.seed=42\n"
      "  mcmc.alpha0  =  0.5  \n"
      "flag.on = true\n");
  CHECK(cfg.get_string("dataset.path") == "/tmp/x.csv");
  CHECK(cfg.get_int("run.seed", -1) == 42);
  CHECK(cfg.get_double("mcmc.alpha0", 0.0) == 0.5);
  CHECK(cfg.get_bool("flag.on", false));
  CHECK_FALSE(cfg.has("missing.key"));
}

TEST_CASE("parse errors carry line numbers") {
  try {
    Config::from_string("a.b = 1\nnot an assignment\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(Config::from_string("= value\n"), ConfigError);
}

TEST_CASE("typed getters validate values") {
  const Config cfg = Config::from_string("k.int = oops\nk.bool = maybe\n");
  CHECK_THROWS_AS(cfg.get_int("k.int", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("k.int", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("k.bool", false), ConfigError);
  CHECK_THROWS_AS(cfg.get_string("k.missing"), ConfigError);
  CHECK(cfg.get_string("k.missing", "d") == "d");
}

TEST_CASE("overrides win, defaults fill") {
  Config cfg = Config::from_string("a.x = 1\n");
  cfg.apply_override("a.x=2");
  cfg.apply_override("b.y = 3");
  CHECK(cfg.get_int("a.x", 0) == 2);
  CHECK(cfg.get_int("b.y", 0) == 3);
  CHECK_THROWS_AS(cfg.apply_override("no-equals-sign"), ConfigError);

  cfg.set_default("a.x", "9");  // present: untouched
  cfg.set_default("c.z", "9");  // absent: filled
  CHECK(cfg.get_int("a.x", 0) == 2);
  CHECK(cfg.get_int("c.z", 0) == 9);
}

TEST_CASE("serialize round-trips as a valid config") {
  Config cfg = Config::from_string("b.y = two\na.x = 1\n");
  cfg.set("c.z", "3.5");
  const std::string text = cfg.serialize();
  // sorted, one assignment per line
  CHECK(text == "a.x = 1\nb.y = two\nc.z = 3.5\n");
  const Config again = Config::from_string(text);
  CHECK(again.values() == cfg.values());
}
