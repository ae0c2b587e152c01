#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "yk/common.hpp"

using namespace yk;

TEST_CASE("counter rng is a pure function of its arguments") {
  REQUIRE(rng_u64(1, 2, 3) == rng_u64(1, 2, 3));
  REQUIRE(rng_u64(1, 2, 3) != rng_u64(1, 2, 4));
  REQUIRE(rng_u64(1, 2, 3) != rng_u64(1, 3, 3));
  REQUIRE(rng_u64(1, 2, 3) != rng_u64(2, 2, 3));
}

TEST_CASE("counter rng draws do not depend on evaluation order") {
  std::vector<double> forward, backward;
  for (int i = 0; i < 100; ++i) forward.push_back(rng_u01(7, 0, static_cast<std::uint64_t>(i)));
  for (int i = 99; i >= 0; --i) backward.push_back(rng_u01(7, 0, static_cast<std::uint64_t>(i)));
  std::reverse(backward.begin(), backward.end());
  REQUIRE(forward == backward);
}

TEST_CASE("uniform draws stay in range and are roughly uniform") {
  double sum = 0;
  for (int i = 0; i < 10000; ++i) {
    double v = rng_u01(42, 1, static_cast<std::uint64_t>(i));
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    sum += v;
  }
  REQUIRE(std::abs(sum / 10000.0 - 0.5) < 0.02);
  double s2 = 0;
  for (int i = 0; i < 1000; ++i) s2 += rng_sym(42, 2, static_cast<std::uint64_t>(i));
  REQUIRE(std::abs(s2 / 1000.0) < 0.06);
}

TEST_CASE("real formatting is deterministic and round-trips") {
  REQUIRE(fmt_real(0.0) == "0");
  REQUIRE(fmt_real(-0.0) == "0");
  REQUIRE(fmt_real(1.5) == "1.5");
  REQUIRE(fmt_real(1e300) == "1e+300");
  for (int i = 0; i < 500; ++i) {
    double v = (rng_u01(3, 3, static_cast<std::uint64_t>(i)) - 0.5) * std::pow(10.0, i % 20 - 10);
    double back = std::stod(fmt_real(v));
    REQUIRE(back == Catch::Approx(v).epsilon(1e-11));
  }
}

TEST_CASE("fnv hash distinguishes contents") {
  std::set<std::uint64_t> seen;
  REQUIRE(seen.insert(fnv1a64("")).second);
  REQUIRE(seen.insert(fnv1a64("a")).second);
  REQUIRE(seen.insert(fnv1a64("b")).second);
  REQUIRE(seen.insert(fnv1a64("ab")).second);
  REQUIRE(fnv1a64("abc") == fnv1a64("abc"));
  REQUIRE(hex64(fnv1a64("")).size() == 16);
}
