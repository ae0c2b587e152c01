#include <catch2/catch_amalgamated.hpp>

#include "yk/gauge.hpp"

using namespace yk;

TEST_CASE("ground configuration carries the chiral flux pattern") {
  Lattice lat = build_lattice({Boundary::torus, 3, 3});
  GaugeConfig g = ground_gauge(lat);
  for (std::size_t p = 0; p < lat.plaquettes.size(); ++p) {
    std::complex<double> w = flux_phase(lat, g, static_cast<int>(p));
    if (lat.plaquettes[p].kind == PlaquetteKind::dodecagon) {
      REQUIRE(w.real() == Catch::Approx(-1.0).margin(1e-12));
      REQUIRE(w.imag() == Catch::Approx(0.0).margin(1e-12));
    } else {
      REQUIRE(w.real() == Catch::Approx(0.0).margin(1e-12));
      REQUIRE(w.imag() == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("ground flux pattern is vortex free") {
  Lattice lat = build_lattice({Boundary::droplet, 3, 2});
  DanglingPairing pairing = pair_dangling(lat);
  GaugeConfig g = ground_gauge(lat, &pairing);
  FluxPattern f = flux_pattern(lat, g, &pairing);
  for (std::int8_t w : f.w) REQUIRE(w == 1);
  for (std::int8_t w : f.w_pair) REQUIRE(w == 1);
  REQUIRE(count_vortices(lat, g, &pairing) == 0);
}

TEST_CASE("dangling pairing covers every unreserved stub exactly once") {
  Lattice lat = build_lattice({Boundary::droplet, 2, 2});
  DanglingPairing pairing = pair_dangling(lat);
  REQUIRE(pairing.pairs.size() == 4);
  std::vector<int> seen(static_cast<std::size_t>(lat.n_sites()), 0);
  for (const PairLink& p : pairing.pairs) {
    ++seen[static_cast<std::size_t>(p.site_i)];
    ++seen[static_cast<std::size_t>(p.site_j)];
    REQUIRE(lat.dangling_flavor[static_cast<std::size_t>(lat.dangling_index(p.site_i))] == p.flavor_i);
    REQUIRE(lat.dangling_flavor[static_cast<std::size_t>(lat.dangling_index(p.site_j))] == p.flavor_j);
    // the arc is a connected rim path from site_i to site_j
    REQUIRE(p.arc_sites.front() == p.site_i);
    REQUIRE(p.arc_sites.back() == p.site_j);
    REQUIRE(p.arc_links.size() + 1 == p.arc_sites.size());
    for (std::size_t i = 0; i < p.arc_links.size(); ++i) {
      const Link& l = lat.links[static_cast<std::size_t>(p.arc_links[i])];
      int a = p.arc_sites[i], b = p.arc_sites[i + 1];
      REQUIRE(((l.from == a && l.to == b) || (l.from == b && l.to == a)));
    }
  }
  for (int s : lat.dangling_sites) REQUIRE(seen[static_cast<std::size_t>(s)] == 1);
}

TEST_CASE("reserving injection sites excludes them from the pairing") {
  Lattice lat = build_lattice({Boundary::droplet, 2, 2});
  int a = lat.dangling_sites[0], b = lat.dangling_sites[3];
  DanglingPairing pairing = pair_dangling(lat, {a, b});
  REQUIRE(pairing.pairs.size() == 3);
  REQUIRE(pairing.pair_of_site[static_cast<std::size_t>(a)] == -1);
  REQUIRE(pairing.pair_of_site[static_cast<std::size_t>(b)] == -1);
  REQUIRE_THROWS_AS(pair_dangling(lat, {a}), input_error);  // odd remainder
  REQUIRE_THROWS_AS(pair_dangling(lat, {0, 0}), input_error);
  REQUIRE_THROWS_AS(pair_dangling(lat, {lat.plaquettes[0].sites[0] + 2}), input_error);
}

TEST_CASE("fluxes are invariant under random gauge transformations") {
  for (auto geom : {Geometry{Boundary::droplet, 3, 2}, Geometry{Boundary::cylinder, 3, 4}}) {
    Lattice lat = build_lattice(geom);
    DanglingPairing pairing = pair_dangling(lat);
    GaugeConfig g = ground_gauge(lat, &pairing);
    insert_vortex_pair(lat, g, 0, lat.n_cells() + 1, &pairing);
    FluxPattern before = flux_pattern(lat, g, &pairing);
    GaugeConfig g0 = g;
    for (int t = 0; t < 1000; ++t) {
      int site = static_cast<int>(rng_u64(11, 0, static_cast<std::uint64_t>(t)) %
                                  static_cast<std::uint64_t>(lat.n_sites()));
      gauge_transform(lat, g, site, &pairing);
      FluxPattern after = flux_pattern(lat, g, &pairing);
      REQUIRE(after.w == before.w);
      REQUIRE(after.w_pair == before.w_pair);
    }
    REQUIRE(g.u != g0.u);  // the link variables themselves did change
  }
}

TEST_CASE("vortex pair insertion flips exactly the endpoint fluxes") {
  Lattice lat = build_lattice({Boundary::torus, 4, 4});
  GaugeConfig ground = ground_gauge(lat);
  FluxPattern f0 = flux_pattern(lat, ground);

  auto expect_flips = [&](int p1, int p2) {
    GaugeConfig g = ground;
    insert_vortex_pair(lat, g, p1, p2);
    FluxPattern f = flux_pattern(lat, g);
    for (std::size_t p = 0; p < f.w.size(); ++p) {
      bool endpoint = (static_cast<int>(p) == p1 || static_cast<int>(p) == p2);
      REQUIRE(f.w[p] == (endpoint ? -f0.w[p] : f0.w[p]));
    }
    REQUIRE(count_vortices(lat, g) == 2);
    insert_vortex_pair(lat, g, p1, p2);  // involution
    REQUIRE(flux_pattern(lat, g).w == f0.w);
  };

  int ncell = lat.n_cells();
  SECTION("dodecagon pair") {
    expect_flips(lat.dodecagon_at[0], lat.dodecagon_at[static_cast<std::size_t>(lat.cell_index(2, 1))]);
  }
  SECTION("triangle pair, same species") { expect_flips(0, lat.cell_index(2, 2)); }
  SECTION("triangle pair, opposite species") { expect_flips(1, ncell + 5); }
  SECTION("mixed triangle and dodecagon") {
    expect_flips(2, lat.dodecagon_at[static_cast<std::size_t>(lat.cell_index(1, 3))]);
  }
}

TEST_CASE("boundary vortices live on pair cycles") {
  Lattice lat = build_lattice({Boundary::droplet, 3, 3});
  DanglingPairing pairing = pair_dangling(lat);
  GaugeConfig g = ground_gauge(lat, &pairing);
  FluxPattern f0 = flux_pattern(lat, g, &pairing);

  SECTION("a dangling vortex flips exactly one pair cycle") {
    insert_dangling_vortex(g, 2);
    FluxPattern f = flux_pattern(lat, g, &pairing);
    REQUIRE(f.w == f0.w);
    for (std::size_t k = 0; k < f.w_pair.size(); ++k)
      REQUIRE(f.w_pair[k] == (k == 2 ? -f0.w_pair[k] : f0.w_pair[k]));
    REQUIRE(count_vortices(lat, g, &pairing) == 1);
  }

  SECTION("a dual path can run from the bulk to a boundary cycle") {
    int from = lat.dodecagon_at[static_cast<std::size_t>(lat.cell_index(0, 1))];
    int to = static_cast<int>(lat.plaquettes.size());  // first pair cycle
    insert_vortex_pair(lat, g, from, to, &pairing);
    FluxPattern f = flux_pattern(lat, g, &pairing);
    int flips = 0;
    for (std::size_t p = 0; p < f.w.size(); ++p)
      if (f.w[p] != f0.w[p]) {
        ++flips;
        REQUIRE(static_cast<int>(p) == from);
      }
    for (std::size_t k = 0; k < f.w_pair.size(); ++k)
      if (f.w_pair[k] != f0.w_pair[k]) {
        ++flips;
        REQUIRE(static_cast<int>(lat.plaquettes.size() + k) == to);
      }
    REQUIRE(flips == 2);
  }
}

TEST_CASE("gauge serialization round-trips through flip lists") {
  Lattice lat = build_lattice({Boundary::droplet, 3, 2});
  DanglingPairing pairing = pair_dangling(lat);
  GaugeConfig g = ground_gauge(lat, &pairing);
  for (int t = 0; t < 40; ++t) {
    int l = static_cast<int>(rng_u64(5, 1, static_cast<std::uint64_t>(t)) %
                             static_cast<std::uint64_t>(lat.n_links()));
    g.u[static_cast<std::size_t>(l)] = static_cast<std::int8_t>(-g.u[static_cast<std::size_t>(l)]);
  }
  insert_dangling_vortex(g, 1);
  auto j = gauge_to_json(lat, g, &pairing);
  GaugeConfig back = gauge_from_json(lat, j, &pairing);
  REQUIRE(back.u == g.u);
  REQUIRE(back.u_pair == g.u_pair);
  REQUIRE(gauge_to_json(lat, back, &pairing).dump() == j.dump());

  Lattice other = build_lattice({Boundary::droplet, 2, 3});
  REQUIRE_THROWS_AS(gauge_from_json(other, j, nullptr), input_error);
}
