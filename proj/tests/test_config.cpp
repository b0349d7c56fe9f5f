#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "wbgnn/config.hpp"

using namespace wbgnn;

TEST_CASE("parse basics, comments, whitespace") {
  Config c = Config::parse_string(
      "# a comment\n"
      "alpha = 3\n"
      "  beta=2.5   # trailing comment\n"
      "\n"
      "name = hello world\n"
      "flag = true\n");
  CHECK(c.get_int("alpha") == 3);
  CHECK(c.get_double("beta") == 2.5);
  CHECK(c.get_str("name") == "hello world");
  CHECK(c.get_bool("flag"));
  CHECK(c.get_int("missing", 7) == 7);
  CHECK_FALSE(c.has("missing"));
  CHECK_THROWS(c.get_int("missing"));
  CHECK_THROWS(c.get_int("name"));
  CHECK_THROWS(c.get_bool("beta"));
  CHECK_THROWS(Config::parse_string("no equals sign here\n"));
  CHECK_THROWS(Config::parse_string("= value\n"));
}

TEST_CASE("serialization is sorted and round-trips doubles exactly") {
  Config c;
  c.set_double("z_last", 0.1);
  c.set_double("a_first", 1.0 / 3.0);
  c.set_int("mid", -42);
  const std::string s = c.serialize();
  CHECK(s.find("a_first") < s.find("mid"));
  CHECK(s.find("mid") < s.find("z_last"));

  Config back = Config::parse_string(s);
  CHECK(back.get_double("z_last") == 0.1);
  CHECK(back.get_double("a_first") == 1.0 / 3.0);
  CHECK(back.get_int("mid") == -42);

  // serialization is byte-stable
  CHECK(back.serialize() == s);
}

TEST_CASE("file round trip") {
  const char* path = "cfg_roundtrip_test.cfg";
  Config c;
  c.set_str("k", "v");
  c.set_double("pi_ish", 3.14159265358979);
  c.write_file(path);
  Config d = Config::parse_file(path);
  CHECK(d.get_str("k") == "v");
  CHECK(d.get_double("pi_ish") == 3.14159265358979);
  std::remove(path);
  CHECK_THROWS(Config::parse_file("definitely_missing_file.cfg"));
}
