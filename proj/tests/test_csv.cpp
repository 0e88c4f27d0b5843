#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "leveldot/csv.hpp"
#include "leveldot/rng.hpp"

using namespace leveldot;

TEST_SUITE("csv") {

TEST_CASE("format_double round-trips every bit pattern it is given") {
    PhiloxStream s({3, 0}, kDotStream);
    for (int i = 0; i < 20000; ++i) {
        const double x = std::ldexp(s.normal(), static_cast<int>(s.next_u32() % 600) - 300);
        REQUIRE(parse_double(format_double(x)) == x);
    }
    CHECK(parse_double(format_double(0.1)) == 0.1);
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(std::isinf(parse_double("inf")));
}

TEST_CASE("parse_double rejects partial or empty fields") {
    CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("abc"), std::invalid_argument);
}

TEST_CASE("tables keep comments, columns and rows apart") {
    std::istringstream in("# hello\n# k: v\na,b,c\n1,2,3\n4,5,6\n");
    const CsvTable t = read_csv(in);
    CHECK(t.comments.size() == 2);
    CHECK(t.columns == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][t.column("c")] == "6");
    CHECK_THROWS_AS(t.column("zzz"), std::invalid_argument);
}

TEST_CASE("split_csv_line keeps empty fields") {
    CHECK(split_csv_line("a,,b") == std::vector<std::string>{"a", "", "b"});
    CHECK(split_csv_line("x") == std::vector<std::string>{"x"});
}

}
