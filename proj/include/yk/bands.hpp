#pragma once

#include <complex>
#include <vector>

#include "yk/fermion.hpp"

namespace yk {

// ---------------------------------------------------------------------------
// Cylinder band structure: with a gauge that is uniform along the periodic
// direction the single-particle matrix iA block-diagonalizes over momenta
// k = 2 pi n / ly, leaving a (6 lx)-dimensional Hermitian block per k.
// ---------------------------------------------------------------------------

inline void require_translation_invariant_y(const Lattice& lat,
                                            const GaugeConfig& g) {
  if (lat.geom.boundary != Boundary::cylinder)
    throw input_error("momentum decomposition requires a cylinder");
  for (int l = 0; l < lat.n_links(); ++l) {
    const Link& lk = lat.links[static_cast<std::size_t>(l)];
    const Site& s = lat.sites[static_cast<std::size_t>(lk.from)];
    int shifted_from = lat.site_id(s.ix, s.iy + 1, s.sub);
    int l2 = lat.flavor_link[static_cast<std::size_t>(shifted_from)]
                            [static_cast<std::size_t>(link_flavor(lk.type) - 1)];
    if (l2 < 0 || lat.links[static_cast<std::size_t>(l2)].type != lk.type)
      throw numeric_error("translation lookup failed");
    if (g.u[static_cast<std::size_t>(l)] != g.u[static_cast<std::size_t>(l2)])
      throw input_error(
          "gauge is not translation invariant along the cylinder axis");
  }
}

/// Momentum-resolved block of iA at momentum ky (units 1/a).
inline Eigen::MatrixXcd bloch_cylinder_h(const Lattice& lat,
                                         const GaugeConfig& g, double kappa,
                                         double ky) {
  const int lx = lat.geom.lx;
  Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(6 * lx, 6 * lx);
  const std::complex<double> ii(0.0, 1.0);
  for (int l = 0; l < lat.n_links(); ++l) {
    const Link& lk = lat.links[static_cast<std::size_t>(l)];
    const Site& sf = lat.sites[static_cast<std::size_t>(lk.from)];
    if (sf.iy != 0) continue;
    const Site& st = lat.sites[static_cast<std::size_t>(lk.to)];
    int rf = sf.ix * 6 + sf.sub;
    int rt = st.ix * 6 + st.sub;
    std::complex<double> amp =
        ii * kappa * static_cast<double>(g.u[static_cast<std::size_t>(l)]) *
        std::exp(ii * (ky * lk.dy));
    H(rf, rt) += amp;
    H(rt, rf) += std::conj(amp);
  }
  return H;
}

struct BandStructure {
  int lx = 0, ly = 0;
  int strip = 3;          // boundary strip width (cells) for classification
  double edge_cut = 0.9;  // boundary weight above which a state is an edge state
  std::vector<double> ky;       // 2 pi n / ly, n = 0..ly-1
  Eigen::MatrixXd energy;       // (6 lx) x ly, ascending per column
  Eigen::MatrixXd weight_low;   // boundary weight on the ix < strip side
  Eigen::MatrixXd weight_high;  // boundary weight on the ix >= lx-strip side
  double bulk_gap = 0;          // min positive energy among bulk states
};

namespace detail {
inline void edge_weights(const Eigen::MatrixXcd& vecs, int lx, int strip,
                         Eigen::VectorXd& wlo, Eigen::VectorXd& whi) {
  const int dim = 6 * lx;
  wlo.setZero(dim);
  whi.setZero(dim);
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < dim; ++r) {
      int ix = r / 6;
      double p = std::norm(vecs(r, c));
      if (ix < strip) wlo(c) += p;
      if (ix >= lx - strip) whi(c) += p;
    }
}
}  // namespace detail

inline BandStructure band_structure(const Lattice& lat, const GaugeConfig& g,
                                    double kappa, int strip = 3,
                                    double edge_cut = 0.9) {
  require_translation_invariant_y(lat, g);
  const int lx = lat.geom.lx, ly = lat.geom.ly;
  if (strip * 2 >= lx)
    throw input_error("cylinder too narrow for the requested boundary strip");
  BandStructure bs;
  bs.lx = lx;
  bs.ly = ly;
  bs.strip = strip;
  bs.edge_cut = edge_cut;
  const int dim = 6 * lx;
  bs.energy.resize(dim, ly);
  bs.weight_low.resize(dim, ly);
  bs.weight_high.resize(dim, ly);
  bs.bulk_gap = std::numeric_limits<double>::infinity();
  Eigen::VectorXd wlo, whi;
  for (int nk = 0; nk < ly; ++nk) {
    double ky = 2.0 * M_PI * nk / ly;
    bs.ky.push_back(ky);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        bloch_cylinder_h(lat, g, kappa, ky));
    if (es.info() != Eigen::Success)
      throw numeric_error("band diagonalization failed");
    bs.energy.col(nk) = es.eigenvalues();
    detail::edge_weights(es.eigenvectors(), lx, strip, wlo, whi);
    bs.weight_low.col(nk) = wlo;
    bs.weight_high.col(nk) = whi;
    for (int c = 0; c < dim; ++c)
      if (bs.energy(c, nk) > 0 && wlo(c) <= edge_cut && whi(c) <= edge_cut)
        bs.bulk_gap = std::min(bs.bulk_gap, bs.energy(c, nk));
  }
  return bs;
}

// ---------------------------------------------------------------------------
// Chiral edge branch: locate the zero crossing of the boundary branch, its
// group velocity, and the transverse decay length of the edge state.
// ---------------------------------------------------------------------------

struct EdgeFit {
  double k_cross;   // momentum (units 1/a) where the branch reaches zero
  double velocity;  // |d eps / d k| at the crossing, units kappa * a
  double xi;        // transverse decay length, units a (cells)
  bool low_side;    // true: branch on the ix < strip boundary
};

inline EdgeFit edge_crossing(const Lattice& lat, const GaugeConfig& g,
                             double kappa, const BandStructure& bs,
                             bool low_side = true) {
  const int lx = bs.lx, dim = 6 * lx;

  // lowest positive edge energy on the requested side at one momentum
  auto branch = [&](double ky) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        bloch_cylinder_h(lat, g, kappa, ky));
    Eigen::VectorXd wlo, whi;
    detail::edge_weights(es.eigenvectors(), lx, bs.strip, wlo, whi);
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < dim; ++c) {
      double w = low_side ? wlo(c) : whi(c);
      if (es.eigenvalues()(c) >= 0 && w > bs.edge_cut)
        best = std::min(best, es.eigenvalues()(c));
    }
    return best;
  };

  // coarse minimum over the computed grid
  int best_nk = -1;
  double best_e = std::numeric_limits<double>::infinity();
  for (int nk = 0; nk < bs.ly; ++nk)
    for (int c = 0; c < dim; ++c) {
      double w = low_side ? bs.weight_low(c, nk) : bs.weight_high(c, nk);
      if (bs.energy(c, nk) >= 0 && w > bs.edge_cut && bs.energy(c, nk) < best_e) {
        best_e = bs.energy(c, nk);
        best_nk = nk;
      }
    }
  if (best_nk < 0)
    throw numeric_error("no edge branch found on the requested boundary");

  // golden-section refinement around the coarse minimum
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = bs.ky[static_cast<std::size_t>(best_nk)] - 2.0 * M_PI / bs.ly;
  double b = bs.ky[static_cast<std::size_t>(best_nk)] + 2.0 * M_PI / bs.ly;
  double c1 = b - gr * (b - a), c2 = a + gr * (b - a);
  double f1 = branch(c1), f2 = branch(c2);
  for (int it = 0; it < 40 && (b - a) > 1e-10; ++it) {
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - gr * (b - a);
      f1 = branch(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + gr * (b - a);
      f2 = branch(c2);
    }
  }
  EdgeFit fit;
  fit.low_side = low_side;
  fit.k_cross = 0.5 * (a + b);

  // A chiral branch is positive on only one side of the crossing; on the
  // other side its positive partner lives on the opposite boundary.  Probe
  // both directions and keep the one that stays on this branch.
  const double dk = 0.02;
  double e_minus = branch(fit.k_cross - dk);
  double e_plus = branch(fit.k_cross + dk);
  double dir = (e_minus <= e_plus) ? -1.0 : 1.0;
  fit.velocity = std::min(e_minus, e_plus) / dk;

  // transverse profile of the edge state just off the crossing
  double kprobe = fit.k_cross + dir * 2.5 * dk;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
      bloch_cylinder_h(lat, g, kappa, kprobe));
  Eigen::VectorXd wlo, whi;
  detail::edge_weights(es.eigenvectors(), lx, bs.strip, wlo, whi);
  int pick = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < dim; ++c) {
    double w = low_side ? wlo(c) : whi(c);
    if (es.eigenvalues()(c) >= 0 && w > bs.edge_cut && es.eigenvalues()(c) < best) {
      best = es.eigenvalues()(c);
      pick = c;
    }
  }
  if (pick < 0) throw numeric_error("edge state lost during refinement");
  Eigen::VectorXd row = Eigen::VectorXd::Zero(lx);
  for (int r = 0; r < dim; ++r)
    row(r / 6) += std::norm(es.eigenvectors()(r, pick));
  // log-linear fit over rows 2..min(10, lx/2) measured from the boundary
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  int lo = 2, hi = std::min(10, lx / 2);
  for (int i = lo; i < hi; ++i) {
    int ix = low_side ? i : lx - 1 - i;
    if (row(ix) <= 0) continue;
    double x = i, y = std::log(row(ix));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 3) throw numeric_error("edge profile too short for a decay fit");
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  if (slope >= 0) throw numeric_error("edge profile does not decay");
  fit.xi = -1.0 / slope;
  return fit;
}

}  // namespace yk
