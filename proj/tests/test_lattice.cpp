#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "yk/lattice.hpp"

using namespace yk;

namespace {
Lattice make(Boundary b, int lx, int ly) { return build_lattice({b, lx, ly}); }

void check_cycles_are_links(const Lattice& lat) {
  for (const Plaquette& p : lat.plaquettes) {
    REQUIRE(p.sites.size() == p.links.size());
    for (std::size_t i = 0; i < p.sites.size(); ++i) {
      const Link& l = lat.links[static_cast<std::size_t>(p.links[i])];
      int a = p.sites[i], b = p.sites[(i + 1) % p.sites.size()];
      if (p.along[i] > 0) {
        REQUIRE(l.from == a);
        REQUIRE(l.to == b);
      } else {
        REQUIRE(l.from == b);
        REQUIRE(l.to == a);
      }
    }
  }
}
}  // namespace

TEST_CASE("torus counts and Euler characteristic") {
  Lattice lat = make(Boundary::torus, 2, 2);
  REQUIRE(lat.n_sites() == 24);
  REQUIRE(lat.n_links() == 36);
  REQUIRE(lat.n_triangles == 8);
  REQUIRE(lat.n_dodecagons == 4);
  // V - E + F = 0 on a torus
  REQUIRE(lat.n_sites() - lat.n_links() + lat.n_triangles + lat.n_dodecagons == 0);
  REQUIRE(lat.dangling_sites.empty());
  REQUIRE(lat.walks.empty());

  int per_type[6] = {0, 0, 0, 0, 0, 0};
  for (const Link& l : lat.links) ++per_type[static_cast<int>(l.type)];
  for (int t = 0; t < 3; ++t) REQUIRE(per_type[t] == 8);   // intra, both triangles
  for (int t = 3; t < 6; ++t) REQUIRE(per_type[t] == 4);   // one primed link per cell

  check_cycles_are_links(lat);
}

TEST_CASE("every site touches one link of each flavor on a torus") {
  Lattice lat = make(Boundary::torus, 3, 2);
  for (int s = 0; s < lat.n_sites(); ++s)
    for (int f = 0; f < 3; ++f) {
      int l = lat.flavor_link[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      REQUIRE(l >= 0);
      REQUIRE(link_flavor(lat.links[static_cast<std::size_t>(l)].type) == f + 1);
      REQUIRE((lat.links[static_cast<std::size_t>(l)].from == s ||
               lat.links[static_cast<std::size_t>(l)].to == s));
    }
}

TEST_CASE("dodecagon membership counts identify the bulk") {
  Lattice lat = make(Boundary::torus, 3, 3);
  std::vector<int> count(static_cast<std::size_t>(lat.n_links()), 0);
  for (const Plaquette& p : lat.plaquettes)
    if (p.kind == PlaquetteKind::dodecagon)
      for (int l : p.links) ++count[static_cast<std::size_t>(l)];
  for (int l = 0; l < lat.n_links(); ++l)
    REQUIRE(count[static_cast<std::size_t>(l)] ==
            (is_primed(lat.links[static_cast<std::size_t>(l)].type) ? 2 : 1));
}

TEST_CASE("cylinder geometry used for spectra") {
  Lattice lat = make(Boundary::cylinder, 61, 40);
  REQUIRE(lat.n_sites() == 14640);
  REQUIRE(lat.n_links() == 21920);
  REQUIRE(lat.n_triangles == 4880);
  REQUIRE(lat.n_dodecagons == 2400);
  REQUIRE(lat.dangling_sites.size() == 80);
  REQUIRE(lat.walks.size() == 2);
  // one cut bond per period on each open edge; all cut bonds carry flavor y
  for (std::size_t i = 0; i < lat.dangling_sites.size(); ++i) {
    REQUIRE(lat.dangling_flavor[i] == 2);
    int sub = lat.sites[static_cast<std::size_t>(lat.dangling_sites[i])].sub;
    REQUIRE((sub == 1 || sub == 4));
  }
  check_cycles_are_links(lat);
}

TEST_CASE("boundary walks are closed cycles") {
  for (auto geom : {Geometry{Boundary::cylinder, 4, 6}, Geometry{Boundary::droplet, 5, 3}}) {
    Lattice lat = build_lattice(geom);
    REQUIRE(!lat.walks.empty());
    for (const BoundaryWalk& w : lat.walks) {
      REQUIRE(w.sites.size() == w.links.size());
      for (std::size_t i = 0; i < w.sites.size(); ++i) {
        const Link& l = lat.links[static_cast<std::size_t>(w.links[i])];
        int a = w.sites[i], b = w.sites[(i + 1) % w.sites.size()];
        REQUIRE(((l.from == a && l.to == b) || (l.from == b && l.to == a)));
      }
    }
  }
}

TEST_CASE("droplet dangling census") {
  Lattice lat = make(Boundary::droplet, 5, 3);
  REQUIRE(lat.n_sites() == 90);
  REQUIRE(lat.n_links() == 127);
  REQUIRE(lat.dangling_sites.size() == 2 * 5 + 2 * 3);
  REQUIRE(lat.walks.size() == 1);
  int flavor_count[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < lat.dangling_sites.size(); ++i) {
    int s = lat.dangling_sites[i];
    int f = lat.dangling_flavor[i];
    flavor_count[f]++;
    // the missing link is exactly the flavor slot that is empty
    REQUIRE(lat.flavor_link[static_cast<std::size_t>(s)][static_cast<std::size_t>(f - 1)] == -1);
    REQUIRE(lat.dangling_index(s) == static_cast<int>(i));
  }
  REQUIRE(flavor_count[1] == 10);  // x-flavor stubs on the x' cut rows
  REQUIRE(flavor_count[2] == 6);   // y-flavor stubs on the y' cut columns
  REQUIRE(flavor_count[3] == 0);   // z' links are never cut
  // walk order visits dangling sites consecutively around the rim
  for (std::size_t i = 0; i < lat.dangling_sites.size(); ++i) {
    REQUIRE(lat.dangling_walk[i] == 0);
    if (i > 0) REQUIRE(lat.dangling_pos[i] > lat.dangling_pos[i - 1]);
  }
}

TEST_CASE("single-cell droplet keeps the bridge") {
  Lattice lat = make(Boundary::droplet, 1, 1);
  REQUIRE(lat.n_sites() == 6);
  REQUIRE(lat.n_links() == 7);
  REQUIRE(lat.n_dodecagons == 0);
  REQUIRE(lat.dangling_sites.size() == 4);
  REQUIRE(lat.walks.size() == 1);
  REQUIRE(lat.walks[0].sites.size() == 8);  // rim doubles back through the bridge
}

TEST_CASE("site ids follow the cell-major layout") {
  Lattice lat = make(Boundary::torus, 3, 2);
  for (int iy = 0; iy < 2; ++iy)
    for (int ix = 0; ix < 3; ++ix)
      for (int sub = 0; sub < 6; ++sub) {
        int id = lat.site_id(ix, iy, sub);
        REQUIRE(id == (iy * 3 + ix) * 6 + sub);
        REQUIRE(lat.sites[static_cast<std::size_t>(id)].ix == ix);
        REQUIRE(lat.sites[static_cast<std::size_t>(id)].iy == iy);
        REQUIRE(lat.sites[static_cast<std::size_t>(id)].sub == sub);
      }
  REQUIRE(lat.site_id(3, 0, 0) == lat.site_id(0, 0, 0));
  REQUIRE(lat.site_id(0, -1, 2) == lat.site_id(0, 1, 2));
}

TEST_CASE("embedding positions are distinct") {
  Lattice lat = make(Boundary::torus, 2, 2);
  std::set<std::pair<long long, long long>> seen;
  for (const Site& s : lat.sites) {
    auto key = std::make_pair(static_cast<long long>(s.px * 1e9),
                              static_cast<long long>(s.py * 1e9));
    REQUIRE(seen.insert(key).second);
  }
}

TEST_CASE("serialization round-trips bit-identically") {
  for (auto geom : {Geometry{Boundary::torus, 2, 3}, Geometry{Boundary::cylinder, 3, 4},
                    Geometry{Boundary::droplet, 4, 2}}) {
    Lattice lat = build_lattice(geom);
    auto j = lattice_to_json(lat);
    std::string once = j.dump();
    Lattice back = lattice_from_json(nlohmann::json::parse(once));
    REQUIRE(lattice_to_json(back).dump() == once);
  }
}

TEST_CASE("serialization rejects tampered documents") {
  Lattice lat = make(Boundary::droplet, 2, 2);
  auto j = lattice_to_json(lat);
  j["n_sites"] = lat.n_sites() + 1;
  REQUIRE_THROWS_AS(lattice_from_json(j), input_error);
  auto j2 = lattice_to_json(lat);
  j2["format"] = "something-else";
  REQUIRE_THROWS_AS(lattice_from_json(j2), input_error);
}
