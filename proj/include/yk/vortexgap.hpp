#pragma once

// Energy cost of a pair of flux excitations as a function of separation.
//
// A pair of vortices on a torus is created by flipping the gauge variables
// along a dual path; the total ground-state energy rises by the pair
// creation cost plus an interaction that decays exponentially with the pair
// separation.  Fitting E(d) = E_inf + c * exp(-d/xi) over several
// separations extrapolates the isolated-pair cost E_inf, which is the gap
// reported per species: vortices are created in pairs, so E_inf is the
// thermodynamic threshold for exciting the flux sector.

#include <cmath>
#include <limits>
#include <vector>

#include "yk/common.hpp"
#include "yk/fermion.hpp"
#include "yk/gauge.hpp"
#include "yk/lattice.hpp"

namespace yk {

enum class VortexSpecies : std::uint8_t { dodecagonal, triangular };

inline const char* vortex_species_name(VortexSpecies s) {
  return s == VortexSpecies::dodecagonal ? "dodecagonal" : "triangular";
}

struct VortexGapFit {
  VortexSpecies species{};
  double gap = 0;            // asymptotic pair-creation cost E_inf
  double single_vortex = 0;  // E_inf / 2, the per-vortex share
  double amplitude = 0;  // interaction amplitude c in the exponential model
  double xi = 0;         // interaction range
  double rms = 0;        // root-mean-square residual of the fit
  std::vector<double> separation;   // Euclidean pair separations
  std::vector<double> pair_energy;  // measured E(d) = E_pair - E_ground
};

// Plaquette id of the requested species in cell (ix, iy); cells are wrapped.
inline int species_plaquette(const Lattice& lat, VortexSpecies sp, int ix,
                             int iy) {
  int lx = lat.geom.lx, ly = lat.geom.ly;
  int cell = ((iy % ly + ly) % ly) * lx + ((ix % lx + lx) % lx);
  if (sp == VortexSpecies::triangular) return cell;  // species-A triangle
  int p = lat.dodecagon_at[static_cast<std::size_t>(cell)];
  if (p < 0) throw input_error("no twelve-site plaquette in the given cell");
  return p;
}

// Pair energy above the flux ground state for two same-species vortices in
// cells (0,0) and (s,0).
inline double vortex_pair_energy(const Lattice& lat, double kappa,
                                 VortexSpecies sp, int s, double e_ground) {
  GaugeConfig g = ground_gauge(lat);
  insert_vortex_pair(lat, g, species_plaquette(lat, sp, 0, 0),
                     species_plaquette(lat, sp, s, 0));
  return vacuum_energy_fast(assemble_majorana(lat, g, kappa)) - e_ground;
}

// Least-squares fit of E(d) = e_infty + c * exp(-d/xi) via a scan over xi
// with the linear pair (e_infty, c) solved exactly at each trial range.
inline void fit_exponential_tail(const std::vector<double>& d,
                                 const std::vector<double>& e, double& e_infty,
                                 double& c, double& xi, double& rms) {
  std::size_t n = d.size();
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 600; ++t) {
    double trial = 0.05 * std::pow(200.0 / 0.05, t / 599.0);  // 0.05 .. 200
    double s1 = static_cast<double>(n), sx = 0, sxx = 0, sy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double x = std::exp(-d[i] / trial);
      sx += x;
      sxx += x * x;
      sy += e[i];
      sxy += x * e[i];
    }
    double det = s1 * sxx - sx * sx;
    if (std::abs(det) < 1e-14) continue;
    double a0 = (sxx * sy - sx * sxy) / det;  // e_infty
    double a1 = (s1 * sxy - sx * sy) / det;   // c
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = e[i] - a0 - a1 * std::exp(-d[i] / trial);
      ssr += r * r;
    }
    if (ssr < best) {
      best = ssr;
      e_infty = a0;
      c = a1;
      xi = trial;
    }
  }
  rms = std::sqrt(best / static_cast<double>(n));
}

// Measure the pair energy at the given cell separations and extrapolate the
// isolated-vortex gap.  Requires at least three separations for the
// three-parameter fit.
inline VortexGapFit vortex_gap(const Lattice& lat, double kappa,
                               VortexSpecies sp,
                               const std::vector<int>& separations) {
  if (lat.geom.boundary != Boundary::torus)
    throw input_error("vortex-gap extrapolation runs on a torus");
  if (separations.size() < 3)
    throw input_error(
        "need at least three separations to fit the interaction tail");
  for (int s : separations)
    if (s < 1 || 2 * s > lat.geom.lx)
      throw input_error("separations must lie between 1 and half the torus "
                        "circumference");

  double e_ground = vacuum_energy_fast(
      assemble_majorana(lat, ground_gauge(lat), kappa));

  VortexGapFit fit;
  fit.species = sp;
  for (int s : separations) {
    fit.separation.push_back(static_cast<double>(s));
    fit.pair_energy.push_back(vortex_pair_energy(lat, kappa, sp, s, e_ground));
  }
  fit_exponential_tail(fit.separation, fit.pair_energy, fit.gap,
                       fit.amplitude, fit.xi, fit.rms);
  fit.single_vortex = 0.5 * fit.gap;
  return fit;
}

}  // namespace yk
