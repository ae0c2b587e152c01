#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "yk/common.hpp"

namespace yk {

struct PfaffianResult {
  int sign;        // -1, 0, +1
  double log_abs;  // log |Pf|, -inf when sign == 0

  double value() const { return sign * std::exp(log_abs); }
};

/// Pfaffian of a real antisymmetric matrix via skew-symmetric Householder
/// tridiagonalization. Each reflection has determinant -1 and multiplies the
/// Pfaffian by that determinant; the reduced tridiagonal form contributes the
/// product of its even-position superdiagonal entries.
inline PfaffianResult pfaffian(Eigen::MatrixXd A, double rel_tol = 1e-12) {
  const auto n = A.rows();
  if (A.cols() != n) throw input_error("pfaffian requires a square matrix");
  if (n % 2 != 0) return {0, -std::numeric_limits<double>::infinity()};
  const double scale = A.cwiseAbs().maxCoeff();
  if ((A + A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
    throw input_error("pfaffian requires an antisymmetric matrix");
  if (scale == 0.0) return {0, -std::numeric_limits<double>::infinity()};

  int sign = 1;
  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    const Eigen::Index m = n - k - 1;
    Eigen::VectorXd x = A.col(k).segment(k + 1, m);
    if (x.tail(m - 1).cwiseAbs().maxCoeff() <= 1e-300) continue;
    double alpha = x.norm();
    double beta = x(0) >= 0 ? -alpha : alpha;
    Eigen::VectorXd w = x;
    w(0) -= beta;
    const double wn2 = w.squaredNorm();
    if (wn2 <= 1e-300) continue;
    // A <- P A P with P = I - 2 w w^T / (w^T w) acting on rows/cols k+1..
    Eigen::MatrixXd block = A.block(k + 1, 0, m, n);
    block -= (2.0 / wn2) * w * (w.transpose() * block);
    A.block(k + 1, 0, m, n) = block;
    Eigen::MatrixXd cols = A.block(0, k + 1, n, m);
    cols -= (2.0 / wn2) * (cols * w) * w.transpose();
    A.block(0, k + 1, n, m) = cols;
    sign = -sign;
  }

  double log_abs = 0.0;
  for (Eigen::Index k = 0; k < n; k += 2) {
    const double b = A(k, k + 1);
    if (std::abs(b) <= rel_tol * scale)
      return {0, -std::numeric_limits<double>::infinity()};
    if (b < 0) sign = -sign;
    log_abs += std::log(std::abs(b));
  }
  return {sign, log_abs};
}

inline int pfaffian_sign(const Eigen::MatrixXd& A) {
  PfaffianResult r = pfaffian(A);
  if (r.sign == 0)
    throw numeric_error("Pfaffian sign is numerically ambiguous");
  return r.sign;
}

}  // namespace yk
