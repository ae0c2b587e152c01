#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <vector>

#include "yk/gauge.hpp"

namespace yk {

// ---------------------------------------------------------------------------
// Itinerant Majorana sector: H = (i/4) sum_ij A_ij g_i g_j with A real
// antisymmetric. One itinerant Majorana per lattice site; link (i -> j) with
// strength kappa and gauge sign u contributes A_ij = +kappa u.
// ---------------------------------------------------------------------------

struct QuadraticForm {
  int n = 0;
  Eigen::SparseMatrix<double> A;
};

inline QuadraticForm assemble_majorana(const Lattice& lat, const GaugeConfig& g,
                                       const Eigen::VectorXd& link_strength) {
  check_gauge(lat, g);
  if (link_strength.size() != lat.n_links())
    throw input_error("per-link strengths do not match the lattice");
  QuadraticForm qf;
  qf.n = lat.n_sites();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(2 * lat.n_links()));
  for (int l = 0; l < lat.n_links(); ++l) {
    const Link& lk = lat.links[static_cast<std::size_t>(l)];
    double a = link_strength(l) * g.u[static_cast<std::size_t>(l)];
    trip.emplace_back(lk.from, lk.to, a);
    trip.emplace_back(lk.to, lk.from, -a);
  }
  qf.A.resize(qf.n, qf.n);
  qf.A.setFromTriplets(trip.begin(), trip.end());
  return qf;
}

inline QuadraticForm assemble_majorana(const Lattice& lat, const GaugeConfig& g,
                                       double kappa = 1.0) {
  return assemble_majorana(lat, g,
                           Eigen::VectorXd::Constant(lat.n_links(), kappa));
}

// ---------------------------------------------------------------------------
// Mode basis. Rows of Q are annihilation-mode coefficient rows: the mode
// operators are c_k = 2^{-1/2} sum_j Q_kj g_j with nonnegative energies
// eps_k ascending, H = sum_k eps_k (c_k^dag c_k - 1/2). The particle-hole
// partner of row k is its complex conjugate.
// ---------------------------------------------------------------------------

struct ModeBasis {
  int n = 0;                 // number of Majoranas (2 * n_modes)
  Eigen::VectorXd eps;       // ascending, nonnegative
  Eigen::MatrixXcd Q;        // n_modes x n
  double vacuum_energy = 0;  // -(1/2) sum eps

  int n_modes() const { return static_cast<int>(eps.size()); }

  /// Row of the signed-mode matrix [Q; conj(Q)], k in [0, 2*n_modes).
  Eigen::RowVectorXcd signed_row(int k) const {
    if (k < n_modes()) return Q.row(k);
    return Q.row(k - n_modes()).conjugate();
  }
};

inline ModeBasis diagonalize_modes(const QuadraticForm& qf,
                                   double zero_tol = 1e-11) {
  if (qf.n % 2 != 0) throw input_error("odd Majorana count has no mode basis");
  const int n = qf.n, m = n / 2;
  Eigen::MatrixXcd M = std::complex<double>(0, 1) * Eigen::MatrixXd(qf.A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M);
  if (es.info() != Eigen::Success)
    throw numeric_error("mode diagonalization failed to converge");
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending, symmetric set
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1.0);

  ModeBasis basis;
  basis.n = n;
  basis.eps.resize(m);
  basis.Q.resize(m, n);

  // Positive modes are the upper half of the ascending spectrum. Eigenvectors
  // in a numerically zero cluster need not come in conjugate pairs, so that
  // cluster is rebuilt from a real basis of its span.
  int z = 0;
  while (z < m && std::abs(ev(m + z)) <= zero_tol * scale) ++z;

  for (int k = z; k < m; ++k) {
    basis.eps(k) = ev(m + k);
    basis.Q.row(k) = es.eigenvectors().col(m + k).adjoint();
  }
  if (z > 0) {
    Eigen::MatrixXcd cluster = es.eigenvectors().block(0, m - z, n, 2 * z);
    Eigen::MatrixXd span(n, 4 * z);
    span << cluster.real(), cluster.imag();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(span, Eigen::ComputeThinU);
    if (svd.singularValues()(2 * z - 1) < 0.1 ||
        (svd.singularValues().size() > 2 * z && svd.singularValues()(2 * z) > 1e-6))
      throw numeric_error("null-space basis extraction failed");
    Eigen::MatrixXd qfull = svd.matrixU().leftCols(2 * z);
    // columns of qfull: real orthonormal basis of the null space
    for (int i = 0; i < z; ++i) {
      basis.eps(i) = 0.0;
      basis.Q.row(i) =
          ((qfull.col(2 * i).transpose().cast<std::complex<double>>() -
            std::complex<double>(0, 1) *
                qfull.col(2 * i + 1).transpose().cast<std::complex<double>>()) /
           std::sqrt(2.0));
    }
  }
  basis.vacuum_energy = -0.5 * basis.eps.sum();
  return basis;
}

/// Fast vacuum energy: -(1/2) sum eps via the spectrum of -A^2 = A^T A,
/// whose eigenvalues are the squared mode energies, each twice.
inline double vacuum_energy_fast(const QuadraticForm& qf) {
  Eigen::MatrixXd A(qf.A);
  Eigen::MatrixXd AtA = A.transpose() * A;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(AtA, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw numeric_error("vacuum energy solve failed to converge");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    sum += std::sqrt(std::max(0.0, es.eigenvalues()(i)));
  return -0.25 * sum;
}

/// Largest deviation of the signed-mode matrix [Q; conj(Q)] from unitarity.
inline double mode_unitarity_defect(const ModeBasis& b) {
  const int m = b.n_modes();
  Eigen::MatrixXcd F(2 * m, b.n);
  F.topRows(m) = b.Q;
  F.bottomRows(m) = b.Q.conjugate();
  return (F * F.adjoint() - Eigen::MatrixXcd::Identity(2 * m, 2 * m))
      .cwiseAbs()
      .maxCoeff();
}

/// Largest residual |(iA) q_k - eps_k q_k| over all modes.
inline double mode_pairing_defect(const QuadraticForm& qf, const ModeBasis& b) {
  Eigen::MatrixXcd R =
      std::complex<double>(0, 1) * (qf.A * b.Q.transpose().conjugate());
  R -= b.Q.transpose().conjugate() * b.eps.asDiagonal();
  return R.cwiseAbs().maxCoeff();
}

}  // namespace yk
