#include <catch2/catch_amalgamated.hpp>

#include "yk/bands.hpp"

using namespace yk;

TEST_CASE("momentum blocks reproduce the real-space spectrum") {
  Lattice lat = build_lattice({Boundary::cylinder, 5, 4});
  GaugeConfig g = ground_gauge(lat);
  ModeBasis full = diagonalize_modes(assemble_majorana(lat, g, 1.0));

  // Particle-hole symmetry maps the block at k onto minus the block at -k,
  // so across all blocks every mode energy shows up exactly twice as |lambda|.
  std::vector<double> block_abs;
  for (int nk = 0; nk < 4; ++nk) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
        bloch_cylinder_h(lat, g, 1.0, 2.0 * M_PI * nk / 4));
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      block_abs.push_back(std::abs(es.eigenvalues()(i)));
  }
  std::sort(block_abs.begin(), block_abs.end());
  REQUIRE(static_cast<int>(block_abs.size()) == 2 * full.n_modes());
  for (int i = 0; i < full.n_modes(); ++i) {
    REQUIRE(block_abs[static_cast<std::size_t>(2 * i)] ==
            Catch::Approx(full.eps(i)).margin(1e-9));
    REQUIRE(block_abs[static_cast<std::size_t>(2 * i + 1)] ==
            Catch::Approx(full.eps(i)).margin(1e-9));
  }
}

TEST_CASE("vortex sectors are rejected by the momentum decomposition") {
  Lattice lat = build_lattice({Boundary::cylinder, 5, 4});
  GaugeConfig g = ground_gauge(lat);
  insert_vortex_pair(lat, g, 0, 1);
  REQUIRE_THROWS_AS(band_structure(lat, g, 1.0), input_error);
}

TEST_CASE("bulk gap and chiral edge crossing on a medium cylinder") {
  Lattice lat = build_lattice({Boundary::cylinder, 20, 12});
  GaugeConfig g = ground_gauge(lat);
  BandStructure bs = band_structure(lat, g, 1.0);

  // bulk gap close to its thermodynamic value (pinned tightly on the large
  // cylinder in the acceptance suite)
  REQUIRE(bs.bulk_gap > 0.40);
  REQUIRE(bs.bulk_gap < 0.52);

  for (bool side : {true, false}) {
    EdgeFit fit = edge_crossing(lat, g, 1.0, bs, side);
    REQUIRE(std::abs(fit.k_cross - M_PI) < 0.45);
    REQUIRE(fit.velocity > 0.05);
    REQUIRE(fit.velocity < 2.0);
    REQUIRE(fit.xi > 0.1);
    REQUIRE(fit.xi < 6.0);
  }
}

TEST_CASE("edge branch descends into the gap on both boundaries") {
  Lattice lat = build_lattice({Boundary::cylinder, 14, 10});
  GaugeConfig g = ground_gauge(lat);
  BandStructure bs = band_structure(lat, g, 1.0);
  int low_in_gap = 0, high_in_gap = 0;
  for (int nk = 0; nk < bs.ly; ++nk)
    for (int c = 0; c < 6 * bs.lx; ++c) {
      if (bs.energy(c, nk) < 0 || bs.energy(c, nk) > 0.9 * bs.bulk_gap) continue;
      if (bs.weight_low(c, nk) > bs.edge_cut) ++low_in_gap;
      if (bs.weight_high(c, nk) > bs.edge_cut) ++high_in_gap;
    }
  REQUIRE(low_in_gap >= 2);
  REQUIRE(high_in_gap >= 2);
}

TEST_CASE("scaling the coupling rescales the spectrum") {
  Lattice lat = build_lattice({Boundary::cylinder, 8, 6});
  GaugeConfig g = ground_gauge(lat);
  BandStructure b1 = band_structure(lat, g, 1.0);
  BandStructure b2 = band_structure(lat, g, 2.0);
  REQUIRE(b2.bulk_gap == Catch::Approx(2.0 * b1.bulk_gap).epsilon(1e-10));
  REQUIRE((b2.energy - 2.0 * b1.energy).cwiseAbs().maxCoeff() < 1e-10);
}
