#include <doctest.h>

#include <cmath>
#include <set>

#include "irloss/rng.hpp"

using irloss::Rng;

TEST_SUITE("rng") {
  TEST_CASE("uniform range and moments") {
    Rng rng(1);
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / 100000 - 0.5) < 0.01);
  }

  TEST_CASE("normal moments") {
    Rng rng(2);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
  }

  TEST_CASE("below, sign and mix") {
    Rng rng(3);
    std::set<std::size_t> seen;
    for (int i = 0; i < 1000; ++i) {
      const auto k = rng.below(7);
      REQUIRE(k < 7);
      seen.insert(k);
    }
    CHECK(seen.size() == 7);
    int plus = 0;
    for (int i = 0; i < 10000; ++i) plus += rng.sign() > 0;
    CHECK(std::abs(plus - 5000) < 300);
    CHECK(Rng::mix(1, 2) == Rng::mix(1, 2));
    CHECK(Rng::mix(1, 2) != Rng::mix(2, 1));
    CHECK(Rng::mix(1, 2) != Rng::mix(1, 3));
    Rng a(9), b(9);
    for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  }
}
