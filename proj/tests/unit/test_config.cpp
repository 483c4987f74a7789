#include <doctest.h>

#include "chronocon/config.hpp"

using namespace chronocon;

TEST_CASE("config parses key = value lines with comments") {
  const auto cfg = Config::parse_string(
      "# generator settings\n"
      "n_patients = 20\n"
      "noise_sigma = 0.05  # inline comment\n"
      "name = hello\n"
      "flag = on\n"
      "list = 1,2,3\n"
      "\n");
  CHECK(cfg.get_int("n_patients", 0) == 20);
  CHECK(cfg.get_double("noise_sigma", 0.0) == doctest::Approx(0.05));
  CHECK(cfg.get_string("name", "") == "hello");
  CHECK(cfg.get_bool("flag", false));
  CHECK(cfg.get_double_list("list", {}) == std::vector<double>{1, 2, 3});
  CHECK(cfg.get_int("absent", 7) == 7);
  CHECK_NOTHROW(cfg.check_consumed());
}

TEST_CASE("config rejects malformed input") {
  CHECK_THROWS(Config::parse_string("no equals sign\n"));
  CHECK_THROWS(Config::parse_string("= value\n"));
  CHECK_THROWS(Config::parse_string("a = 1\na = 2\n"));
  const auto cfg = Config::parse_string("x = not_a_number\n");
  CHECK_THROWS(cfg.get_double("x", 0.0));
}

TEST_CASE("unconsumed keys are reported") {
  const auto cfg = Config::parse_string("known = 1\ntypo_key = 2\n");
  CHECK(cfg.get_int("known", 0) == 1);
  CHECK_THROWS(cfg.check_consumed());
}
