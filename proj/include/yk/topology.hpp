#pragma once

// Chern number of the occupied Majorana bands on a torus.
//
// The unit cell holds six sites, so momentum space carries six Bloch bands
// in +/- pairs.  The lower three form the occupied multiplet; their total
// Chern number is computed with the lattice field-strength method:
// plaquette-by-plaquette Berry fluxes built from multiplet link
// determinants.  The result is gauge independent and converges to an exact
// integer once the grid resolves the band gap.

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>

#include "yk/common.hpp"
#include "yk/fermion.hpp"
#include "yk/gauge.hpp"
#include "yk/lattice.hpp"

namespace yk {

struct ChernResult {
  int nu = 0;          // rounded total Chern number of the occupied bands
  double defect = 0;   // |raw - nu|, distance from the nearest integer
  int grid = 0;        // momentum grid used per direction
  double min_gap = 0;  // smallest occupied/empty gap met on the grid
};

namespace detail {

// Every cell must carry the same gauge pattern for a Bloch description to
// exist.  Compare each link against its image in the (0,0) cell.
inline void require_translation_invariant_cells(const Lattice& lat,
                                                const GaugeConfig& g) {
  for (std::size_t l = 0; l < lat.links.size(); ++l) {
    const Link& lk = lat.links[l];
    const Site& sf = lat.sites[static_cast<std::size_t>(lk.from)];
    int ref_site = lat.site_id(0, 0, sf.sub);
    int ref_link = lat.flavor_link[static_cast<std::size_t>(ref_site)]
                                  [link_flavor(lk.type) - 1];
    if (ref_link < 0 || g.u[l] != g.u[static_cast<std::size_t>(ref_link)])
      throw input_error(
          "gauge sector is not cell-periodic; momentum decomposition "
          "requires one magnetic unit cell");
  }
}

}  // namespace detail

// Six-band Bloch Hamiltonian at momentum (kx, ky), in units where the two
// cell vectors are the momentum axes.  `strength` holds one bond energy per
// link, matching the real-space assembly.
inline Eigen::MatrixXcd bloch_torus_h(const Lattice& lat, const GaugeConfig& g,
                                      const Eigen::VectorXd& strength,
                                      double kx, double ky) {
  if (lat.geom.boundary != Boundary::torus)
    throw input_error("momentum decomposition requires a torus");
  if (strength.size() != static_cast<Eigen::Index>(lat.links.size()))
    throw input_error("one bond strength per link is required");
  detail::require_translation_invariant_cells(lat, g);

  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(6, 6);
  const std::complex<double> I(0.0, 1.0);
  for (std::size_t l = 0; l < lat.links.size(); ++l) {
    const Link& lk = lat.links[l];
    const Site& sf = lat.sites[static_cast<std::size_t>(lk.from)];
    if (sf.ix != 0 || sf.iy != 0) continue;
    const Site& st = lat.sites[static_cast<std::size_t>(lk.to)];
    std::complex<double> amp = I * strength(static_cast<Eigen::Index>(l)) *
                               static_cast<double>(g.u[l]) *
                               std::exp(I * (kx * lk.dx + ky * lk.dy));
    h(sf.sub, st.sub) += amp;
    h(st.sub, sf.sub) += std::conj(amp);
  }
  return h;
}

inline Eigen::MatrixXcd bloch_torus_h(const Lattice& lat, const GaugeConfig& g,
                                      double kappa, double kx, double ky) {
  return bloch_torus_h(
      lat, g,
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lat.links.size()),
                                kappa),
      kx, ky);
}

// Field-strength Chern number of the three occupied bands on an n x n grid.
inline ChernResult chern_number(const Lattice& lat, const GaugeConfig& g,
                                const Eigen::VectorXd& strength, int grid) {
  if (grid < 4) throw input_error("momentum grid must have at least 4 points");
  constexpr int occ = 3;
  const double step = 2.0 * M_PI / grid;

  // occupied frames on the grid
  std::vector<Eigen::MatrixXcd> frame(
      static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid));
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
          bloch_torus_h(lat, g, strength, i * step, j * step));
      double gap = es.eigenvalues()(occ) - es.eigenvalues()(occ - 1);
      min_gap = std::min(min_gap, gap);
      if (gap < 1e-8)
        throw input_error("occupied bands touch the empty bands at kx=" +
                          fmt_real(i * step) + " ky=" + fmt_real(j * step) +
                          "; the sector has no spectral gap");
      frame[static_cast<std::size_t>(i * grid + j)] =
          es.eigenvectors().leftCols(occ);
    }

  auto at = [&](int i, int j) -> const Eigen::MatrixXcd& {
    return frame[static_cast<std::size_t>(((i % grid + grid) % grid) * grid +
                                          ((j % grid + grid) % grid))];
  };
  auto link = [&](int i0, int j0, int i1, int j1) {
    std::complex<double> d =
        (at(i0, j0).adjoint() * at(i1, j1)).determinant();
    if (std::abs(d) < 1e-12)
      throw numeric_error("multiplet overlap vanished between grid points");
    return d;
  };

  double total = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j) {
      std::complex<double> loop = link(i, j, i + 1, j) *
                                  link(i + 1, j, i + 1, j + 1) *
                                  link(i + 1, j + 1, i, j + 1) *
                                  link(i, j + 1, i, j);
      double flux = std::arg(loop);
      // Admissibility: a plaquette flux at the branch edge means the grid
      // straddles a near-degeneracy and the integer is untrustworthy.
      if (std::abs(flux) > 0.99 * M_PI)
        throw input_error("momentum grid cannot resolve the Berry flux near "
                          "kx=" + fmt_real(i * step) + " ky=" +
                          fmt_real(j * step) + "; refine the grid or move "
                          "away from the gap closing");
      total += flux;
    }
  total /= 2.0 * M_PI;

  ChernResult res;
  res.nu = static_cast<int>(std::lround(total));
  res.defect = std::abs(total - res.nu);
  res.grid = grid;
  res.min_gap = min_gap;
  return res;
}

inline ChernResult chern_number(const Lattice& lat, const GaugeConfig& g,
                                double kappa, int grid) {
  return chern_number(
      lat, g,
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lat.links.size()),
                                kappa),
      grid);
}

// Convergence-checked Chern number: compute on `grid`, recompute on a grid
// twice as fine, and require both to land on the same integer.
inline ChernResult chern_converged(const Lattice& lat, const GaugeConfig& g,
                                   const Eigen::VectorXd& strength,
                                   int grid = 24) {
  ChernResult coarse = chern_number(lat, g, strength, grid);
  ChernResult fine = chern_number(lat, g, strength, 2 * grid);
  if (coarse.nu != fine.nu)
    throw numeric_error("topological index did not converge under grid "
                        "refinement: " +
                        fmt_int(coarse.nu) + " vs " + fmt_int(fine.nu));
  return fine;
}

inline ChernResult chern_converged(const Lattice& lat, const GaugeConfig& g,
                                   double kappa, int grid = 24) {
  return chern_converged(
      lat, g,
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lat.links.size()),
                                kappa),
      grid);
}

// Reverse the handedness of the ground sector: flipping the sign of every
// intra-triangle bond conjugates each triangle's circulation (+i -> -i)
// while leaving all twelve-site plaquettes untouched.
inline Eigen::VectorXd chirality_reversed_strength(const Lattice& lat,
                                                   double kappa) {
  Eigen::VectorXd s = Eigen::VectorXd::Constant(
      static_cast<Eigen::Index>(lat.links.size()), kappa);
  for (std::size_t l = 0; l < lat.links.size(); ++l)
    if (!is_primed(lat.links[l].type)) s(static_cast<Eigen::Index>(l)) = -kappa;
  return s;
}

}  // namespace yk
