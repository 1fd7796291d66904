#include "healthpredictor/csv.hpp"

#include <cmath>
#include <limits>

#include "support.hpp"

using namespace hp;

TEST_CASE("csv parse keeps header, rows and source lines") {
  const auto t = csv::parse("a,b\n1,2\n\n3,4\r\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1] == std::vector<std::string>{"3", "4"});
  CHECK(t.lines[1] == 4);
  CHECK(t.column("b") == 1);
}

TEST_CASE("csv rows with the wrong arity are rejected") {
  CHECK_ERROR_CODE(csv::parse("a,b\n1,2,3\n"), ErrorCode::MalformedRow);
  CHECK_ERROR_CODE(csv::parse("a,b\n1\n"), ErrorCode::MalformedRow);
}

TEST_CASE("strict numeric fields") {
  CHECK(csv::parse_double(" 0.25 ", "x") == 0.25);
  CHECK(csv::parse_double("-1e-3", "x") == -1e-3);
  CHECK_ERROR_CODE(csv::parse_double("0.2x", "x"), ErrorCode::MalformedRow);
  CHECK_ERROR_CODE(csv::parse_double("", "x"), ErrorCode::MalformedRow);
  CHECK(csv::parse_int("42", "x") == 42);
  CHECK_ERROR_CODE(csv::parse_int("4.2", "x"), ErrorCode::MalformedRow);
  CHECK(csv::parse_bool("true", "x"));
  CHECK_FALSE(csv::parse_bool("0", "x"));
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5, std::nextafter(1.0, 2.0)})
    CHECK(csv::parse_double(csv::format_double(v), "x") == v);
}
