// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "polyscore/rational.hpp"

#include <random>

using polyscore::RationalTime;

TEST_CASE("rational values are kept in lowest terms") {
    RationalTime a(6, -8);
    CHECK(a.num() == -3);
    CHECK(a.den() == 4);
    CHECK(RationalTime(0, 5) == RationalTime(0));
    CHECK(RationalTime(4, 2).is_integer());
    CHECK_THROWS_AS(RationalTime(1, 0), std::domain_error);
}

TEST_CASE("rational arithmetic is exact") {
    RationalTime third(1, 3);
    CHECK(third + third + third == RationalTime(1));
    CHECK(RationalTime(3, 2) * RationalTime(2, 3) == RationalTime(1));
    CHECK(RationalTime(1, 2) - RationalTime(3, 4) == RationalTime(-1, 4));
    CHECK(RationalTime(5, 2) / RationalTime(5, 4) == RationalTime(2));
    CHECK(RationalTime(7, 3).floor() == 2);
    CHECK(RationalTime(-7, 3).floor() == -3);
    CHECK(RationalTime(7, 3).frac() == RationalTime(1, 3));
    CHECK(RationalTime(-1, 3).frac() == RationalTime(2, 3));
}

TEST_CASE("rational ordering agrees with cross multiplication") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> num(-50, 50);
    std::uniform_int_distribution<int> den(1, 48);
    for (int i = 0; i < 500; ++i) {
        int a = num(rng), b = den(rng), c = num(rng), d = den(rng);
        RationalTime x(a, b), y(c, d);
        CHECK((x < y) == (a * d < c * b));
        CHECK((x == y) == (a * d == c * b));
    }
}

TEST_CASE("rational parse and print") {
    CHECK(RationalTime::parse("3/6") == RationalTime(1, 2));
    CHECK(RationalTime::parse("-4") == RationalTime(-4));
    CHECK(RationalTime(3, 2).to_string() == "3/2");
    CHECK(RationalTime(2).to_string() == "2");
    CHECK_THROWS_AS(RationalTime::parse("1/x"), std::invalid_argument);
    CHECK_THROWS_AS(RationalTime::parse(""), std::invalid_argument);
}

TEST_CASE("overflow is detected") {
    RationalTime big(INT64_MAX / 2 + 1);
    CHECK_THROWS_AS(big + big, std::overflow_error);
    CHECK(polyscore::checked_lcm(8, 12) == 24);
    CHECK(polyscore::checked_lcm(3, 8) == 24);
}
