#include <catch2/catch_amalgamated.hpp>

TEST_CASE("noise module pending") { SUCCEED(); }
