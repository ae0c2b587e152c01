#include <catch2/catch_amalgamated.hpp>

#include "yk/oracle.hpp"

using namespace yk;

TEST_CASE("two spins on one z bond split into levels at half the coupling") {
  SpinModel m;
  m.n = 2;
  m.bonds.push_back({0, 1, 3, 0.5 * 1.0});
  Eigen::VectorXd e = spin_spectrum(m);
  REQUIRE(e.size() == 4);
  REQUIRE(e(0) == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(e(1) == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(e(2) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(e(3) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("free-fermion sectors reproduce the spin spectrum exactly") {
  SECTION("smallest open droplet") {
    Lattice lat = build_lattice({Boundary::droplet, 1, 1});
    OracleReport r = validate_cluster(lat, 1.0);
    CAPTURE(r.max_dev, r.sigma0);
    REQUIRE(r.matched);
    REQUIRE(r.n_sectors == 16);
    REQUIRE(r.n_states == 64);
  }
  SECTION("smallest torus") {
    Lattice lat = build_lattice({Boundary::torus, 1, 1});
    OracleReport r = validate_cluster(lat, 1.0);
    CAPTURE(r.max_dev, r.sigma0);
    REQUIRE(r.matched);
    REQUIRE(r.n_sectors == 16);
    REQUIRE(r.n_states == 64);
  }
  SECTION("droplet with two registers") {
    Lattice lat = build_lattice({Boundary::droplet, 1, 1});
    std::vector<RegisterSpec> regs = {{lat.dangling_sites[0], 0.3, 0.8},
                                      {lat.dangling_sites[2], 0.25, 0.8}};
    OracleReport r = validate_cluster(lat, 1.0, regs);
    CAPTURE(r.max_dev, r.sigma0);
    REQUIRE(r.matched);
    REQUIRE(r.n_sectors == 8);
    REQUIRE(r.n_states == 256);
  }
  SECTION("coupling scale is immaterial") {
    Lattice lat = build_lattice({Boundary::droplet, 1, 1});
    OracleReport r = validate_cluster(lat, 0.7);
    REQUIRE(r.matched);
  }
}

TEST_CASE("resonant register exchanges its excitation at the predicted rate") {
  // One z-linked pair (single mode at energy kappa) plus a register tuned to
  // that mode.  The microscopic matrix element is t = g |Q| / sqrt(2) with
  // |Q| = 1/sqrt(2), so a full excitation swap takes pi/(2t) = pi/g.  This
  // pins the factor-of-two convention of the exchange bonds.
  const double kappa = 1.0, g = 0.06;
  SpinModel m;
  m.n = 3;
  m.bonds.push_back({0, 1, 3, 0.5 * kappa});      // lattice pair, z bond
  m.bonds.push_back({2, 0, 1, 0.5 * g});          // register coupling, x
  m.fields.push_back({2, 3, -0.5 * kappa});       // splitting = mode energy

  // ground state of the uncoupled model
  SpinModel m0 = m;
  m0.bonds.pop_back();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_spin_h(m0));
  Eigen::VectorXcd ground = es.eigenvectors().col(0).cast<std::complex<double>>();

  // flip the register with sigma^y (leaves every conserved link untouched)
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(8);
  for (int s = 0; s < 8; ++s) {
    int t = s ^ 4;
    std::complex<double> amp(0.0, (s >> 2 & 1) ? -1.0 : 1.0);
    psi(t) += amp * ground(s);
  }

  auto p_up = [&](const Eigen::VectorXcd& v) {
    double p = 0;
    for (int s = 0; s < 8; ++s)
      if (!(s >> 2 & 1)) p += std::norm(v(s));
    return p;
  };
  REQUIRE(p_up(psi) < 1e-9);

  Eigen::VectorXcd half = evolve_spin(m, psi, M_PI / g / 2.0);
  REQUIRE(p_up(half) > 0.3);
  REQUIRE(p_up(half) < 0.7);

  Eigen::VectorXcd full = evolve_spin(m, psi, M_PI / g);
  REQUIRE(p_up(full) > 0.98);
}

TEST_CASE("oracle rejects malformed cluster requests") {
  Lattice lat = build_lattice({Boundary::droplet, 1, 1});
  // register on a non-dangling site
  REQUIRE_THROWS_AS(build_spin_model(lat, 1.0, {{2, 0.1, 0.5}}), input_error);
  // odd register count breaks the spectator pairing
  REQUIRE_THROWS_AS(validate_cluster(lat, 1.0, {{lat.dangling_sites[0], 0.1, 0.5}}),
                    input_error);
  // mismatched state dimension
  SpinModel m = build_spin_model(lat, 1.0);
  Eigen::VectorXcd bad = Eigen::VectorXcd::Zero(16);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(16);
  REQUIRE_THROWS_AS(apply_spin_h(m, bad, out), input_error);
}

TEST_CASE("dense and matrix-free applications agree") {
  Lattice lat = build_lattice({Boundary::droplet, 1, 1});
  std::vector<RegisterSpec> regs = {{lat.dangling_sites[0], 0.3, 0.8},
                                    {lat.dangling_sites[2], 0.25, 0.8}};
  SpinModel m = build_spin_model(lat, 1.0, regs);
  Eigen::MatrixXd h = dense_spin_h(m);
  REQUIRE((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::Index dim = h.rows();
  Eigen::VectorXcd x(dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    x(i) = std::complex<double>(rng_sym(7, 0, static_cast<std::uint64_t>(i)),
                                rng_sym(7, 1, static_cast<std::uint64_t>(i)));
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(dim);
  apply_spin_h(m, x, y);
  Eigen::VectorXcd ref = h.cast<std::complex<double>>() * x;
  REQUIRE((y - ref).cwiseAbs().maxCoeff() < 1e-12);
}
