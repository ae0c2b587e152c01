#include <catch2/catch_amalgamated.hpp>

TEST_CASE("transfer module pending") { SUCCEED(); }
