#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "yk/common.hpp"

namespace yk {

// ---------------------------------------------------------------------------
// Star lattice (triangle-decorated honeycomb).
//
// Each unit cell holds two triangles: an "A" triangle (sublattices 0,1,2) on
// the honeycomb A node and a "B" triangle (sublattices 3,4,5) on the B node.
// Sublattice s is the corner carrying the inter-triangle link of flavor
//   s%3 == 0 -> x, s%3 == 1 -> y, s%3 == 2 -> z.
// Intra-triangle links carry the flavor of the opposite corner, so every
// site touches one link of each flavor.
// ---------------------------------------------------------------------------

enum class Boundary : std::uint8_t { torus, cylinder, droplet };
// cylinder: periodic along the second cell axis (iy), open along ix.

inline const char* boundary_name(Boundary b) {
  switch (b) {
    case Boundary::torus: return "torus";
    case Boundary::cylinder: return "cylinder";
    case Boundary::droplet: return "droplet";
  }
  throw input_error("unknown boundary kind");
}

inline Boundary boundary_from_name(const std::string& s) {
  if (s == "torus") return Boundary::torus;
  if (s == "cylinder") return Boundary::cylinder;
  if (s == "droplet") return Boundary::droplet;
  throw input_error("unknown boundary kind: " + s);
}

struct Geometry {
  Boundary boundary = Boundary::torus;
  int lx = 1;
  int ly = 1;

  void validate() const {
    if (lx < 1 || ly < 1)
      throw input_error("geometry requires lx >= 1 and ly >= 1");
  }
};

enum class LinkType : std::uint8_t { x = 0, y = 1, z = 2, xp = 3, yp = 4, zp = 5 };

inline bool is_primed(LinkType t) { return static_cast<int>(t) >= 3; }

/// Majorana flavor carried by a link: 1 (x), 2 (y), 3 (z).
inline int link_flavor(LinkType t) { return static_cast<int>(t) % 3 + 1; }

inline const char* link_type_name(LinkType t) {
  static const char* names[6] = {"x", "y", "z", "xp", "yp", "zp"};
  return names[static_cast<int>(t)];
}

inline LinkType link_type_from_name(const std::string& s) {
  static const char* names[6] = {"x", "y", "z", "xp", "yp", "zp"};
  for (int i = 0; i < 6; ++i)
    if (s == names[i]) return static_cast<LinkType>(i);
  throw input_error("unknown link type: " + s);
}

struct Site {
  int ix, iy, sub;
  double px, py;  // embedding position, units of the cell pitch
};

struct Link {
  int from, to;   // canonical orientation
  LinkType type;
  int dx, dy;     // unwrapped cell displacement of `to` relative to `from`
};

enum class PlaquetteKind : std::uint8_t { triangle_a, triangle_b, dodecagon };

inline const char* plaquette_kind_name(PlaquetteKind k) {
  switch (k) {
    case PlaquetteKind::triangle_a: return "triangle_a";
    case PlaquetteKind::triangle_b: return "triangle_b";
    case PlaquetteKind::dodecagon: return "dodecagon";
  }
  throw input_error("unknown plaquette kind");
}

struct Plaquette {
  PlaquetteKind kind;
  int ix, iy;                      // anchor cell
  std::vector<int> sites;          // boundary cycle, counter-clockwise
  std::vector<int> links;          // links[i] joins sites[i] -> sites[i+1 mod n]
  std::vector<std::int8_t> along;  // +1 if canonical orientation matches walk
  double cx, cy;                   // centroid
};

/// One open boundary: closed walk along the outer rim. Sites of degree three
/// next to a cut can appear twice (the walk doubles back through bridges).
struct BoundaryWalk {
  std::vector<int> sites;  // cyclic; links[i] joins sites[i] -> sites[i+1 mod n]
  std::vector<int> links;
};

struct Lattice {
  Geometry geom;
  std::vector<Site> sites;
  std::vector<Link> links;
  std::vector<Plaquette> plaquettes;
  int n_triangles = 0, n_dodecagons = 0;

  // Per site and flavor (1..3): incident link id, or -1 when the boundary
  // removed it. Only the primed link can be missing.
  std::vector<std::array<int, 3>> flavor_link;

  // Sites missing one link, ordered along the boundary walks, and the flavor
  // of the missing (non-interacting) Majorana at each.
  std::vector<int> dangling_sites;
  std::vector<int> dangling_flavor;
  std::vector<int> dangling_walk;  // walk id per dangling site
  std::vector<int> dangling_pos;   // index into walks[w].sites

  std::vector<BoundaryWalk> walks;

  // Plaquette lookup: triangle A of cell c is plaquette c, triangle B is
  // n_cells()+c, dodecagons are indexed through dodecagon_at (-1 if absent).
  std::vector<int> dodecagon_at;

  std::vector<int> dangling_of_;  // per site: index into dangling_sites or -1

  int n_cells() const { return geom.lx * geom.ly; }
  int n_sites() const { return static_cast<int>(sites.size()); }
  int n_links() const { return static_cast<int>(links.size()); }

  int cell_index(int ix, int iy) const { return iy * geom.lx + ix; }

  /// Site id after boundary wrapping; -1 if the cell is outside an open edge.
  int site_id(int ix, int iy, int sub) const {
    if (geom.boundary == Boundary::torus || geom.boundary == Boundary::cylinder) {
      iy = ((iy % geom.ly) + geom.ly) % geom.ly;
    } else if (iy < 0 || iy >= geom.ly) {
      return -1;
    }
    if (geom.boundary == Boundary::torus) {
      ix = ((ix % geom.lx) + geom.lx) % geom.lx;
    } else if (ix < 0 || ix >= geom.lx) {
      return -1;
    }
    return cell_index(ix, iy) * 6 + sub;
  }

  int other_end(int link, int site) const {
    const Link& l = links[static_cast<std::size_t>(link)];
    return l.from == site ? l.to : l.from;
  }

  bool is_dangling(int site) const {
    return dangling_of_[static_cast<std::size_t>(site)] >= 0;
  }
  int dangling_index(int site) const {
    return dangling_of_[static_cast<std::size_t>(site)];
  }
};

namespace detail {

struct Vec2 {
  double x, y;
};

inline Vec2 cell_origin(int ix, int iy) {
  // a1 = (1/2, sqrt(3)/2), a2 = (-1/2, sqrt(3)/2)
  return {0.5 * (ix - iy), 0.5 * std::sqrt(3.0) * (ix + iy)};
}

inline Vec2 corner_offset(int sub) {
  const double rho = 0.28;
  const double hz = 1.0 / std::sqrt(3.0);
  // unit vectors toward the x/y/z inter-triangle neighbors of an A node
  const Vec2 dir[3] = {{std::sqrt(3.0) / 2.0, -0.5},
                       {-std::sqrt(3.0) / 2.0, -0.5},
                       {0.0, 1.0}};
  if (sub < 3) return {rho * dir[sub].x, rho * dir[sub].y};
  return {-rho * dir[sub - 3].x, hz - rho * dir[sub - 3].y};
}

/// Outer-rim closed walk of a planar patch via face tracing: from directed
/// edge (u -> v), continue with the clockwise-next link at v after the
/// reversed edge. Starting from a rim edge this traces the outer face.
inline BoundaryWalk trace_outer_face(const Lattice& lat, int start_site,
                                     int start_link, bool forward) {
  auto angle_at = [&](int site, int link) {
    int nb = lat.other_end(link, site);
    const Site& s = lat.sites[static_cast<std::size_t>(site)];
    const Site& t = lat.sites[static_cast<std::size_t>(nb)];
    return std::atan2(t.py - s.py, t.px - s.px);
  };
  BoundaryWalk walk;
  int u = forward ? start_site : lat.other_end(start_link, start_site);
  int link = start_link;
  const int u0 = u;
  do {
    walk.sites.push_back(u);
    walk.links.push_back(link);
    int v = lat.other_end(link, u);
    // clockwise-next incident link after the reversed edge
    double ref = angle_at(v, link);
    int best = -1;
    double best_gap = 1e9;
    for (int f = 0; f < 3; ++f) {
      int cand = lat.flavor_link[static_cast<std::size_t>(v)][static_cast<std::size_t>(f)];
      if (cand < 0) continue;
      double gap = ref - angle_at(v, cand);  // clockwise angular distance
      while (gap <= 1e-12) gap += 2.0 * M_PI;
      while (gap > 2.0 * M_PI) gap -= 2.0 * M_PI;
      if (gap < best_gap) {
        best_gap = gap;
        best = cand;
      }
    }
    u = v;
    link = best;
  } while (!(u == u0 && link == start_link));
  return walk;
}

}  // namespace detail

inline Lattice build_lattice(const Geometry& geom) {
  geom.validate();
  Lattice lat;
  lat.geom = geom;
  const int lx = geom.lx, ly = geom.ly;
  const int ncell = lx * ly;

  lat.sites.resize(static_cast<std::size_t>(ncell) * 6);
  for (int iy = 0; iy < ly; ++iy)
    for (int ix = 0; ix < lx; ++ix)
      for (int sub = 0; sub < 6; ++sub) {
        int id = lat.cell_index(ix, iy) * 6 + sub;
        detail::Vec2 o = detail::cell_origin(ix, iy);
        detail::Vec2 d = detail::corner_offset(sub);
        lat.sites[static_cast<std::size_t>(id)] = {ix, iy, sub, o.x + d.x, o.y + d.y};
      }

  lat.flavor_link.assign(lat.sites.size(), {-1, -1, -1});

  auto add_link = [&](int from, int to, LinkType type, int dx, int dy) {
    int id = static_cast<int>(lat.links.size());
    lat.links.push_back({from, to, type, dx, dy});
    int f = link_flavor(type) - 1;
    for (int s : {from, to}) {
      auto& slot = lat.flavor_link[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      if (slot != -1) throw numeric_error("duplicate flavor link at a site");
      slot = id;
    }
  };

  // Canonical intra-triangle arrows run clockwise: s0->s1 (z), s1->s2 (x),
  // s2->s0 (y) and likewise s3->s4, s4->s5, s5->s3. Primed arrows run from
  // the A corner to the B corner.
  for (int iy = 0; iy < ly; ++iy)
    for (int ix = 0; ix < lx; ++ix) {
      auto sid = [&](int sub) { return lat.cell_index(ix, iy) * 6 + sub; };
      add_link(sid(0), sid(1), LinkType::z, 0, 0);
      add_link(sid(1), sid(2), LinkType::x, 0, 0);
      add_link(sid(2), sid(0), LinkType::y, 0, 0);
      add_link(sid(3), sid(4), LinkType::z, 0, 0);
      add_link(sid(4), sid(5), LinkType::x, 0, 0);
      add_link(sid(5), sid(3), LinkType::y, 0, 0);
      add_link(sid(2), sid(5), LinkType::zp, 0, 0);
      int b_xp = lat.site_id(ix, iy - 1, 3);
      if (b_xp >= 0) add_link(sid(0), b_xp, LinkType::xp, 0, -1);
      int b_yp = lat.site_id(ix - 1, iy, 4);
      if (b_yp >= 0) add_link(sid(1), b_yp, LinkType::yp, -1, 0);
    }

  lat.dangling_of_.assign(lat.sites.size(), -1);
  std::vector<int> flav(lat.sites.size(), 0);
  int n_dangling = 0;
  for (int s = 0; s < lat.n_sites(); ++s) {
    int missing = 0, count = 0;
    for (int f = 0; f < 3; ++f)
      if (lat.flavor_link[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)] < 0) {
        missing = f + 1;
        ++count;
      }
    if (count > 1) throw numeric_error("site missing more than one link");
    if (count == 1) {
      flav[static_cast<std::size_t>(s)] = missing;
      ++n_dangling;
    }
  }

  auto push_plaquette = [&](PlaquetteKind kind, int ix, int iy,
                            std::vector<int> cycle) {
    Plaquette p;
    p.kind = kind;
    p.ix = ix;
    p.iy = iy;
    p.sites = std::move(cycle);
    const std::size_t n = p.sites.size();
    p.links.resize(n);
    p.along.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      int a = p.sites[i], b = p.sites[(i + 1) % n];
      int found = -1;
      for (int f = 0; f < 3 && found < 0; ++f) {
        int l = lat.flavor_link[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
        if (l >= 0 && lat.other_end(l, a) == b) found = l;
      }
      if (found < 0) throw numeric_error("plaquette cycle step is not a link");
      p.links[i] = found;
      p.along[i] = lat.links[static_cast<std::size_t>(found)].from == a ? 1 : -1;
    }
    double cx = 0, cy = 0;
    for (int s : p.sites) {
      cx += lat.sites[static_cast<std::size_t>(s)].px;
      cy += lat.sites[static_cast<std::size_t>(s)].py;
    }
    p.cx = cx / static_cast<double>(n);
    p.cy = cy / static_cast<double>(n);
    lat.plaquettes.push_back(std::move(p));
  };

  for (int iy = 0; iy < ly; ++iy)
    for (int ix = 0; ix < lx; ++ix) {
      int c = lat.cell_index(ix, iy) * 6;
      push_plaquette(PlaquetteKind::triangle_a, ix, iy, {c + 0, c + 2, c + 1});
    }
  for (int iy = 0; iy < ly; ++iy)
    for (int ix = 0; ix < lx; ++ix) {
      int c = lat.cell_index(ix, iy) * 6;
      push_plaquette(PlaquetteKind::triangle_b, ix, iy, {c + 3, c + 5, c + 4});
    }
  lat.n_triangles = 2 * ncell;

  lat.dodecagon_at.assign(static_cast<std::size_t>(ncell), -1);
  for (int iy = 0; iy < ly; ++iy)
    for (int ix = 0; ix < lx; ++ix) {
      // counter-clockwise twelve-site cycle around the honeycomb hexagon
      // spanning cells (ix,iy), (ix,iy-1), (ix+1,iy-1), (ix+1,iy)
      std::array<int, 12> cyc = {
          lat.site_id(ix, iy, 0),     lat.site_id(ix, iy - 1, 3),
          lat.site_id(ix, iy - 1, 4), lat.site_id(ix + 1, iy - 1, 1),
          lat.site_id(ix + 1, iy - 1, 2), lat.site_id(ix + 1, iy - 1, 5),
          lat.site_id(ix + 1, iy - 1, 3), lat.site_id(ix + 1, iy, 0),
          lat.site_id(ix + 1, iy, 1), lat.site_id(ix, iy, 4),
          lat.site_id(ix, iy, 5),     lat.site_id(ix, iy, 2)};
      if (std::any_of(cyc.begin(), cyc.end(), [](int s) { return s < 0; }))
        continue;
      lat.dodecagon_at[static_cast<std::size_t>(lat.cell_index(ix, iy))] =
          static_cast<int>(lat.plaquettes.size());
      push_plaquette(PlaquetteKind::dodecagon, ix, iy,
                     std::vector<int>(cyc.begin(), cyc.end()));
      ++lat.n_dodecagons;
    }

  // Boundary walks.
  if (geom.boundary == Boundary::cylinder) {
    // Links under-represented in dodecagons (bulk: primed links belong to
    // two, intra links to one) form two disjoint simple cycles.
    std::vector<int> dodeca_count(lat.links.size(), 0);
    for (const Plaquette& p : lat.plaquettes)
      if (p.kind == PlaquetteKind::dodecagon)
        for (int l : p.links) ++dodeca_count[static_cast<std::size_t>(l)];
    std::vector<std::vector<int>> blinks_at(lat.sites.size());
    for (int l = 0; l < lat.n_links(); ++l) {
      int expect = is_primed(lat.links[static_cast<std::size_t>(l)].type) ? 2 : 1;
      if (dodeca_count[static_cast<std::size_t>(l)] < expect) {
        blinks_at[static_cast<std::size_t>(lat.links[static_cast<std::size_t>(l)].from)].push_back(l);
        blinks_at[static_cast<std::size_t>(lat.links[static_cast<std::size_t>(l)].to)].push_back(l);
      }
    }
    for (std::size_t s = 0; s < lat.sites.size(); ++s)
      if (!blinks_at[s].empty() && blinks_at[s].size() != 2)
        throw numeric_error("boundary walk is not a disjoint union of cycles");
    std::vector<char> used(lat.links.size(), 0);
    for (int s0 = 0; s0 < lat.n_sites(); ++s0) {
      if (blinks_at[static_cast<std::size_t>(s0)].empty()) continue;
      if (used[static_cast<std::size_t>(blinks_at[static_cast<std::size_t>(s0)][0])] ||
          used[static_cast<std::size_t>(blinks_at[static_cast<std::size_t>(s0)][1])])
        continue;
      BoundaryWalk walk;
      int site = s0;
      int link = std::min(blinks_at[static_cast<std::size_t>(s0)][0],
                          blinks_at[static_cast<std::size_t>(s0)][1]);
      do {
        walk.sites.push_back(site);
        walk.links.push_back(link);
        used[static_cast<std::size_t>(link)] = 1;
        site = lat.other_end(link, site);
        const auto& incid = blinks_at[static_cast<std::size_t>(site)];
        link = (incid[0] == link) ? incid[1] : incid[0];
      } while (site != s0);
      lat.walks.push_back(std::move(walk));
    }
  } else if (geom.boundary == Boundary::droplet) {
    // The planar patch has a single outer rim. Trace it from the smallest
    // dangling site; of the two faces adjacent to its first link, the outer
    // one passes every dangling site.
    int s0 = -1;
    for (int s = 0; s < lat.n_sites() && s0 < 0; ++s)
      if (flav[static_cast<std::size_t>(s)] != 0) s0 = s;
    if (s0 >= 0) {
      int l0 = -1;
      for (int f = 0; f < 3 && l0 < 0; ++f)
        if (lat.flavor_link[static_cast<std::size_t>(s0)][static_cast<std::size_t>(f)] >= 0)
          l0 = lat.flavor_link[static_cast<std::size_t>(s0)][static_cast<std::size_t>(f)];
      bool found = false;
      for (bool forward : {true, false}) {
        BoundaryWalk walk = detail::trace_outer_face(lat, s0, l0, forward);
        int covered = 0;
        for (int s : walk.sites)
          if (flav[static_cast<std::size_t>(s)] != 0) ++covered;
        if (covered == n_dangling) {
          lat.walks.push_back(std::move(walk));
          found = true;
          break;
        }
      }
      if (!found) throw numeric_error("failed to trace the droplet rim");
    }
  }

  for (std::size_t w = 0; w < lat.walks.size(); ++w) {
    const BoundaryWalk& walk = lat.walks[w];
    for (std::size_t i = 0; i < walk.sites.size(); ++i) {
      int s = walk.sites[i];
      if (flav[static_cast<std::size_t>(s)] == 0) continue;
      if (lat.dangling_of_[static_cast<std::size_t>(s)] >= 0)
        throw numeric_error("dangling site visited twice by a boundary walk");
      lat.dangling_of_[static_cast<std::size_t>(s)] = static_cast<int>(lat.dangling_sites.size());
      lat.dangling_sites.push_back(s);
      lat.dangling_flavor.push_back(flav[static_cast<std::size_t>(s)]);
      lat.dangling_walk.push_back(static_cast<int>(w));
      lat.dangling_pos.push_back(static_cast<int>(i));
    }
  }
  if (static_cast<int>(lat.dangling_sites.size()) != n_dangling)
    throw numeric_error("dangling site missed by boundary walks");

  return lat;
}

// ---------------------------------------------------------------------------
// Serialization: versioned deterministic JSON. The loader rebuilds from the
// stored geometry and requires the derived tables to match bit-for-bit.
// ---------------------------------------------------------------------------

inline nlohmann::json lattice_to_json(const Lattice& lat) {
  nlohmann::json j;
  j["format"] = "star-lattice";
  j["version"] = kVersion;
  j["boundary"] = boundary_name(lat.geom.boundary);
  j["lx"] = lat.geom.lx;
  j["ly"] = lat.geom.ly;
  j["n_sites"] = lat.n_sites();
  j["n_links"] = lat.n_links();
  j["n_triangles"] = lat.n_triangles;
  j["n_dodecagons"] = lat.n_dodecagons;
  nlohmann::json links = nlohmann::json::array();
  for (const Link& l : lat.links)
    links.push_back({l.from, l.to, link_type_name(l.type), l.dx, l.dy});
  j["links"] = std::move(links);
  nlohmann::json dang = nlohmann::json::array();
  for (std::size_t i = 0; i < lat.dangling_sites.size(); ++i)
    dang.push_back({lat.dangling_sites[i], lat.dangling_flavor[i]});
  j["dangling"] = std::move(dang);
  nlohmann::json plq = nlohmann::json::array();
  for (const Plaquette& p : lat.plaquettes) {
    nlohmann::json e;
    e["kind"] = plaquette_kind_name(p.kind);
    e["cell"] = {p.ix, p.iy};
    e["sites"] = p.sites;
    e["links"] = p.links;
    plq.push_back(std::move(e));
  }
  j["plaquettes"] = std::move(plq);
  return j;
}

inline Lattice lattice_from_json(const nlohmann::json& j) {
  if (!j.contains("format") || j.at("format") != "star-lattice")
    throw input_error("not a star-lattice document");
  if (!j.contains("version") || j.at("version") != std::string(kVersion))
    throw input_error("unsupported star-lattice version");
  Geometry g;
  g.boundary = boundary_from_name(j.at("boundary").get<std::string>());
  g.lx = j.at("lx").get<int>();
  g.ly = j.at("ly").get<int>();
  Lattice lat = build_lattice(g);
  if (lattice_to_json(lat).dump() != j.dump())
    throw input_error("star-lattice document does not match its geometry");
  return lat;
}

}  // namespace yk
