#include <catch2/catch_amalgamated.hpp>

#include "yk/fermion.hpp"

using namespace yk;

namespace {
GaugeConfig random_flux_sector(const Lattice& lat, std::uint64_t seed) {
  GaugeConfig g = ground_gauge(lat);
  for (int l = 0; l < lat.n_links(); ++l)
    if (rng_u01(seed, 21, static_cast<std::uint64_t>(l)) < 0.5)
      g.u[static_cast<std::size_t>(l)] = -1;
  return g;
}
}  // namespace

TEST_CASE("assembled quadratic form is antisymmetric with link entries") {
  Lattice lat = build_lattice({Boundary::droplet, 1, 1});
  GaugeConfig g = ground_gauge(lat);
  QuadraticForm qf = assemble_majorana(lat, g, 2.5);
  REQUIRE(qf.n == 6);
  Eigen::MatrixXd A(qf.A);
  REQUIRE((A + A.transpose()).cwiseAbs().maxCoeff() == 0.0);
  int nonzero = 0;
  for (int i = 0; i < qf.n; ++i)
    for (int j = 0; j < qf.n; ++j)
      if (A(i, j) != 0.0) {
        ++nonzero;
        REQUIRE(std::abs(A(i, j)) == 2.5);
      }
  REQUIRE(nonzero == 2 * lat.n_links());
  const Link& l0 = lat.links[0];
  REQUIRE(A(l0.from, l0.to) == 2.5);  // +kappa u along the canonical arrow
}

TEST_CASE("mode basis diagonalizes the quadratic form") {
  for (auto geom : {Geometry{Boundary::torus, 2, 2}, Geometry{Boundary::droplet, 2, 2}}) {
    Lattice lat = build_lattice(geom);
    for (std::uint64_t s : {0ull, 1ull, 2ull}) {
      GaugeConfig g = s == 0 ? ground_gauge(lat) : random_flux_sector(lat, s);
      QuadraticForm qf = assemble_majorana(lat, g, 1.0);
      ModeBasis b = diagonalize_modes(qf);
      REQUIRE(b.n_modes() == lat.n_sites() / 2);
      for (int k = 0; k < b.n_modes(); ++k) {
        REQUIRE(b.eps(k) >= 0.0);
        if (k > 0) REQUIRE(b.eps(k) >= b.eps(k - 1));
      }
      REQUIRE(mode_unitarity_defect(b) < 1e-10);
      REQUIRE(mode_pairing_defect(qf, b) < 1e-8);
      REQUIRE(b.vacuum_energy == Catch::Approx(-0.5 * b.eps.sum()));
      REQUIRE(vacuum_energy_fast(qf) == Catch::Approx(b.vacuum_energy).margin(1e-9));
    }
  }
}

TEST_CASE("gauge transformations leave the spectrum unchanged") {
  Lattice lat = build_lattice({Boundary::torus, 3, 2});
  GaugeConfig g = random_flux_sector(lat, 7);
  ModeBasis b0 = diagonalize_modes(assemble_majorana(lat, g, 1.0));
  for (int t = 0; t < 25; ++t) {
    gauge_transform(lat, g, static_cast<int>(rng_u64(9, 4, static_cast<std::uint64_t>(t)) %
                                             static_cast<std::uint64_t>(lat.n_sites())));
  }
  ModeBasis b1 = diagonalize_modes(assemble_majorana(lat, g, 1.0));
  REQUIRE((b0.eps - b1.eps).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("signed rows give a complete conjugate-paired set") {
  Lattice lat = build_lattice({Boundary::droplet, 2, 1});
  QuadraticForm qf = assemble_majorana(lat, ground_gauge(lat), 1.0);
  ModeBasis b = diagonalize_modes(qf);
  const int m = b.n_modes();
  for (int k = 0; k < m; ++k) {
    REQUIRE((b.signed_row(k) - b.Q.row(k)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((b.signed_row(m + k) - b.Q.row(k).conjugate()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("decoupled Majoranas produce a protected zero cluster") {
  // four Majoranas, only the first two coupled
  QuadraticForm qf;
  qf.n = 4;
  std::vector<Eigen::Triplet<double>> trip{{0, 1, 1.0}, {1, 0, -1.0}};
  qf.A.resize(4, 4);
  qf.A.setFromTriplets(trip.begin(), trip.end());
  ModeBasis b = diagonalize_modes(qf);
  REQUIRE(b.eps(0) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(b.eps(1) == Catch::Approx(1.0));
  REQUIRE(b.vacuum_energy == Catch::Approx(-0.5));
  REQUIRE(mode_unitarity_defect(b) < 1e-10);
  REQUIRE(mode_pairing_defect(qf, b) < 1e-10);
}

TEST_CASE("strength vector must match the lattice") {
  Lattice lat = build_lattice({Boundary::droplet, 1, 1});
  REQUIRE_THROWS_AS(assemble_majorana(lat, ground_gauge(lat), Eigen::VectorXd::Ones(3)),
                    input_error);
}
