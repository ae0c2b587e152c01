#include <catch2/catch_amalgamated.hpp>

#include "yk/pfaffian.hpp"

using namespace yk;

namespace {

// combinatorial expansion along the first row, for small matrices
double pfaffian_brute(const Eigen::MatrixXd& A) {
  const auto n = A.rows();
  if (n == 0) return 1.0;
  double sum = 0.0;
  for (Eigen::Index j = 1; j < n; ++j) {
    Eigen::MatrixXd minor(n - 2, n - 2);
    Eigen::Index r = 0;
    for (Eigen::Index a = 1; a < n; ++a) {
      if (a == j) continue;
      Eigen::Index c = 0;
      for (Eigen::Index b = 1; b < n; ++b) {
        if (b == j) continue;
        minor(r, c++) = A(a, b);
      }
      ++r;
    }
    double term = A(0, j) * pfaffian_brute(minor);
    sum += (j % 2 == 1) ? term : -term;
  }
  return sum;
}

Eigen::MatrixXd random_antisym(int n, std::uint64_t stream) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  std::uint64_t c = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      A(i, j) = rng_sym(99, stream, c++);
      A(j, i) = -A(i, j);
    }
  return A;
}

}  // namespace

TEST_CASE("two-by-two pfaffian is the off-diagonal entry") {
  Eigen::MatrixXd A(2, 2);
  A << 0, 3.5, -3.5, 0;
  REQUIRE(pfaffian(A).value() == Catch::Approx(3.5));
  A(0, 1) = -2.0;
  A(1, 0) = 2.0;
  REQUIRE(pfaffian(A).value() == Catch::Approx(-2.0));
  REQUIRE(pfaffian_sign(A) == -1);
}

TEST_CASE("four-by-four pfaffian matches the closed form") {
  for (int t = 0; t < 20; ++t) {
    Eigen::MatrixXd A = random_antisym(4, static_cast<std::uint64_t>(t));
    double expect = A(0, 1) * A(2, 3) - A(0, 2) * A(1, 3) + A(0, 3) * A(1, 2);
    REQUIRE(pfaffian(A).value() == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("pfaffian matches brute-force expansion") {
  for (int n : {2, 4, 6, 8}) {
    for (int t = 0; t < 10; ++t) {
      Eigen::MatrixXd A = random_antisym(n, static_cast<std::uint64_t>(100 + 10 * n + t));
      double expect = pfaffian_brute(A);
      REQUIRE(pfaffian(A).value() == Catch::Approx(expect).epsilon(1e-9).margin(1e-12));
    }
  }
}

TEST_CASE("pfaffian squared equals the determinant") {
  for (int n : {4, 8, 12}) {
    Eigen::MatrixXd A = random_antisym(n, static_cast<std::uint64_t>(500 + n));
    PfaffianResult r = pfaffian(A);
    double det = A.determinant();
    REQUIRE(r.value() * r.value() == Catch::Approx(det).epsilon(1e-8));
  }
}

TEST_CASE("pfaffian transforms with the determinant of a congruence") {
  for (int t = 0; t < 15; ++t) {
    const int n = 8;
    Eigen::MatrixXd A = random_antisym(n, static_cast<std::uint64_t>(700 + t));
    Eigen::MatrixXd B(n, n);
    std::uint64_t c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng_sym(7, static_cast<std::uint64_t>(800 + t), c++);
    Eigen::MatrixXd BABt = B * A * B.transpose();
    double lhs = pfaffian(BABt).value();
    double rhs = B.determinant() * pfaffian(A).value();
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-8).margin(1e-10));
  }
}

TEST_CASE("degenerate and invalid inputs are reported") {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(4, 4);
  REQUIRE(pfaffian(Z).sign == 0);
  REQUIRE_THROWS_AS(pfaffian_sign(Z), numeric_error);
  REQUIRE(pfaffian(Eigen::MatrixXd::Zero(3, 3)).sign == 0);  // odd dimension
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(4, 4);
  REQUIRE_THROWS_AS(pfaffian(S), input_error);
  // direct sum of a zero 2x2 block and a nontrivial one: still singular
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(4, 4);
  D(2, 3) = 1.0;
  D(3, 2) = -1.0;
  REQUIRE(pfaffian(D).sign == 0);
}
