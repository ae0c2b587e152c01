#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <deque>
#include <set>
#include <vector>

#include "json.hpp"
#include "yk/lattice.hpp"

namespace yk {

// ---------------------------------------------------------------------------
// Z2 gauge sector.
//
// A gauge configuration assigns u = +-1 to every lattice link (sign read
// along the canonical orientation) and, when a dangling pairing is present,
// to every pair link. The ground configuration is all +1: with the stored
// canonical arrows this puts phase +i on every triangle and -1 on every
// dodecagon, traversed counter-clockwise.
// ---------------------------------------------------------------------------

/// A boundary pair: two dangling Majoranas tied into one bookkeeping link,
/// plus the rim arc that closes it into a flux-carrying cycle.
struct PairLink {
  int site_i, site_j;          // site_i precedes site_j along the walk
  int flavor_i, flavor_j;      // paired Majorana flavor at each end
  std::vector<int> arc_sites;  // rim segment site_i .. site_j inclusive
  std::vector<int> arc_links;
  std::vector<std::int8_t> arc_along;
};

struct DanglingPairing {
  std::vector<PairLink> pairs;
  std::vector<int> reserved;     // dangling sites left unpaired, sorted
  std::vector<int> pair_of_site;  // per lattice site: pair index or -1
};

inline DanglingPairing pair_dangling(const Lattice& lat,
                                     std::vector<int> reserved = {}) {
  DanglingPairing out;
  std::sort(reserved.begin(), reserved.end());
  if (std::adjacent_find(reserved.begin(), reserved.end()) != reserved.end())
    throw input_error("duplicate reserved site");
  for (int s : reserved)
    if (s < 0 || s >= lat.n_sites() || !lat.is_dangling(s))
      throw input_error("reserved site is not dangling");
  out.reserved = reserved;
  out.pair_of_site.assign(lat.sites.size(), -1);

  auto is_reserved = [&](int s) {
    return std::binary_search(reserved.begin(), reserved.end(), s);
  };

  for (std::size_t w = 0; w < lat.walks.size(); ++w) {
    std::vector<int> ds;  // dangling indices on this walk, walk order
    for (std::size_t i = 0; i < lat.dangling_sites.size(); ++i)
      if (lat.dangling_walk[i] == static_cast<int>(w) &&
          !is_reserved(lat.dangling_sites[i]))
        ds.push_back(static_cast<int>(i));
    if (ds.size() % 2 != 0)
      throw input_error("cannot pair an odd number of dangling sites on a boundary");
    const BoundaryWalk& walk = lat.walks[w];
    const int n = static_cast<int>(walk.sites.size());
    for (std::size_t k = 0; k + 1 < ds.size(); k += 2) {
      PairLink p;
      int di = ds[k], dj = ds[k + 1];
      p.site_i = lat.dangling_sites[static_cast<std::size_t>(di)];
      p.site_j = lat.dangling_sites[static_cast<std::size_t>(dj)];
      p.flavor_i = lat.dangling_flavor[static_cast<std::size_t>(di)];
      p.flavor_j = lat.dangling_flavor[static_cast<std::size_t>(dj)];
      int a = lat.dangling_pos[static_cast<std::size_t>(di)];
      int b = lat.dangling_pos[static_cast<std::size_t>(dj)];
      for (int i = a;; i = (i + 1) % n) {
        p.arc_sites.push_back(walk.sites[static_cast<std::size_t>(i)]);
        if (i == b) break;
        int l = walk.links[static_cast<std::size_t>(i)];
        p.arc_links.push_back(l);
        p.arc_along.push_back(
            lat.links[static_cast<std::size_t>(l)].from == walk.sites[static_cast<std::size_t>(i)]
                ? 1
                : -1);
      }
      out.pair_of_site[static_cast<std::size_t>(p.site_i)] =
          static_cast<int>(out.pairs.size());
      out.pair_of_site[static_cast<std::size_t>(p.site_j)] =
          static_cast<int>(out.pairs.size());
      out.pairs.push_back(std::move(p));
    }
  }
  return out;
}

struct GaugeConfig {
  std::vector<std::int8_t> u;       // per lattice link
  std::vector<std::int8_t> u_pair;  // per dangling pair
};

inline GaugeConfig ground_gauge(const Lattice& lat,
                                const DanglingPairing* pairing = nullptr) {
  GaugeConfig g;
  g.u.assign(static_cast<std::size_t>(lat.n_links()), 1);
  if (pairing) g.u_pair.assign(pairing->pairs.size(), 1);
  return g;
}

inline void check_gauge(const Lattice& lat, const GaugeConfig& g,
                        const DanglingPairing* pairing = nullptr) {
  if (g.u.size() != static_cast<std::size_t>(lat.n_links()))
    throw input_error("gauge size does not match lattice");
  if (pairing && g.u_pair.size() != pairing->pairs.size())
    throw input_error("gauge pair sector does not match pairing");
  for (std::int8_t v : g.u)
    if (v != 1 && v != -1) throw input_error("gauge entries must be +-1");
  for (std::int8_t v : g.u_pair)
    if (v != 1 && v != -1) throw input_error("gauge entries must be +-1");
}

// ---------------------------------------------------------------------------
// Fluxes.
// ---------------------------------------------------------------------------

struct FluxPattern {
  std::vector<std::int8_t> w;       // per plaquette: product of u on the cycle
  std::vector<std::int8_t> w_pair;  // per pair cycle: product over arc + pair
};

inline FluxPattern flux_pattern(const Lattice& lat, const GaugeConfig& g,
                                const DanglingPairing* pairing = nullptr) {
  check_gauge(lat, g, pairing);
  FluxPattern f;
  f.w.reserve(lat.plaquettes.size());
  for (const Plaquette& p : lat.plaquettes) {
    int prod = 1;
    for (int l : p.links) prod *= g.u[static_cast<std::size_t>(l)];
    f.w.push_back(static_cast<std::int8_t>(prod));
  }
  if (pairing) {
    f.w_pair.reserve(pairing->pairs.size());
    for (std::size_t k = 0; k < pairing->pairs.size(); ++k) {
      int prod = g.u_pair[k];
      for (int l : pairing->pairs[k].arc_links) prod *= g.u[static_cast<std::size_t>(l)];
      f.w_pair.push_back(static_cast<std::int8_t>(prod));
    }
  }
  return f;
}

/// Oriented flux phase around a plaquette cycle (counter-clockwise walk):
/// product of (i * u) per step, with u read along the walk direction.
inline std::complex<double> flux_phase(const Lattice& lat, const GaugeConfig& g,
                                       int plaquette) {
  const Plaquette& p = lat.plaquettes[static_cast<std::size_t>(plaquette)];
  std::complex<double> w(1.0, 0.0);
  for (std::size_t i = 0; i < p.links.size(); ++i) {
    double u = g.u[static_cast<std::size_t>(p.links[i])] * p.along[i];
    w *= std::complex<double>(0.0, u);
  }
  return w;
}

/// Number of plaquettes whose flux differs from the ground pattern, counting
/// pair cycles when a pairing is supplied.
inline int count_vortices(const Lattice& lat, const GaugeConfig& g,
                          const DanglingPairing* pairing = nullptr) {
  FluxPattern f = flux_pattern(lat, g, pairing);
  int n = 0;
  for (std::int8_t w : f.w) n += (w == -1);
  for (std::int8_t w : f.w_pair) n += (w == -1);
  return n;
}

/// Local gauge transformation at a site: flips every incident link variable,
/// including the pair link when the site is paired. All fluxes are invariant.
inline void gauge_transform(const Lattice& lat, GaugeConfig& g, int site,
                            const DanglingPairing* pairing = nullptr) {
  for (int f = 0; f < 3; ++f) {
    int l = lat.flavor_link[static_cast<std::size_t>(site)][static_cast<std::size_t>(f)];
    if (l >= 0) g.u[static_cast<std::size_t>(l)] = static_cast<std::int8_t>(-g.u[static_cast<std::size_t>(l)]);
  }
  if (pairing) {
    int k = pairing->pair_of_site[static_cast<std::size_t>(site)];
    if (k >= 0) g.u_pair[static_cast<std::size_t>(k)] = static_cast<std::int8_t>(-g.u_pair[static_cast<std::size_t>(k)]);
  }
}

// ---------------------------------------------------------------------------
// Vortex manipulation through the dual graph.
//
// Dual nodes are plaquettes (ids 0..P-1) and pair cycles (P..P+K-1). Two
// nodes are adjacent when their cycles share a lattice link; flipping that
// link toggles both fluxes. Flipping links along a dual path creates a
// vortex at each endpoint and nowhere else.
// ---------------------------------------------------------------------------

struct DualGraph {
  int n_plaquettes = 0;
  int n_pairs = 0;
  bool has_outer = false;  // open boundaries absorb lone vortices
  std::vector<std::vector<std::pair<int, int>>> adj;  // node -> (node, link)

  int n_nodes() const { return n_plaquettes + n_pairs + (has_outer ? 1 : 0); }
  int outer_node() const {
    if (!has_outer) throw input_error("closed geometry has no outer node");
    return n_plaquettes + n_pairs;
  }
};

inline DualGraph build_dual_graph(const Lattice& lat,
                                  const DanglingPairing* pairing = nullptr) {
  DualGraph d;
  d.n_plaquettes = static_cast<int>(lat.plaquettes.size());
  d.n_pairs = pairing ? static_cast<int>(pairing->pairs.size()) : 0;
  d.has_outer = lat.geom.boundary != Boundary::torus;
  std::vector<std::vector<int>> faces_of_link(static_cast<std::size_t>(lat.n_links()));
  for (int p = 0; p < d.n_plaquettes; ++p)
    for (int l : lat.plaquettes[static_cast<std::size_t>(p)].links)
      faces_of_link[static_cast<std::size_t>(l)].push_back(p);
  if (pairing)
    for (int k = 0; k < d.n_pairs; ++k)
      for (int l : pairing->pairs[static_cast<std::size_t>(k)].arc_links)
        faces_of_link[static_cast<std::size_t>(l)].push_back(d.n_plaquettes + k);
  if (d.has_outer) {
    // rim links outside any pair arc border the outer region; flipping one
    // moves a vortex into or out of the boundary
    for (int l = 0; l < lat.n_links(); ++l)
      while (faces_of_link[static_cast<std::size_t>(l)].size() < 2)
        faces_of_link[static_cast<std::size_t>(l)].push_back(d.outer_node());
  }
  d.adj.resize(static_cast<std::size_t>(d.n_nodes()));
  for (int l = 0; l < lat.n_links(); ++l) {
    const auto& fs = faces_of_link[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < fs.size(); ++i)
      for (std::size_t j = i + 1; j < fs.size(); ++j) {
        if (fs[i] == fs[j]) continue;  // wrapped cycle visiting a link twice
        d.adj[static_cast<std::size_t>(fs[i])].push_back({fs[j], l});
        d.adj[static_cast<std::size_t>(fs[j])].push_back({fs[i], l});
      }
  }
  for (auto& a : d.adj) std::sort(a.begin(), a.end());
  return d;
}

/// Shortest dual-graph path, as the list of links to flip.
inline std::vector<int> dual_path(const DualGraph& d, int from, int to) {
  if (from < 0 || from >= d.n_nodes() || to < 0 || to >= d.n_nodes())
    throw input_error("dual node out of range");
  if (from == to) throw input_error("vortex pair endpoints must differ");
  std::vector<int> prev_node(static_cast<std::size_t>(d.n_nodes()), -1);
  std::vector<int> prev_link(static_cast<std::size_t>(d.n_nodes()), -1);
  std::deque<int> q{from};
  prev_node[static_cast<std::size_t>(from)] = from;
  while (!q.empty()) {
    int n = q.front();
    q.pop_front();
    if (n == to) break;
    for (auto [m, l] : d.adj[static_cast<std::size_t>(n)])
      if (prev_node[static_cast<std::size_t>(m)] < 0) {
        prev_node[static_cast<std::size_t>(m)] = n;
        prev_link[static_cast<std::size_t>(m)] = l;
        q.push_back(m);
      }
  }
  if (prev_node[static_cast<std::size_t>(to)] < 0)
    throw input_error("vortex endpoints are not dual-connected");
  std::vector<int> links;
  for (int n = to; n != from; n = prev_node[static_cast<std::size_t>(n)])
    links.push_back(prev_link[static_cast<std::size_t>(n)]);
  std::reverse(links.begin(), links.end());
  return links;
}

/// Creates one vortex at each endpoint by flipping links along a dual path.
/// Applying the same call twice restores the original configuration.
inline void insert_vortex_pair(const Lattice& lat, GaugeConfig& g, int from,
                               int to, const DanglingPairing* pairing = nullptr) {
  DualGraph d = build_dual_graph(lat, pairing);
  for (int l : dual_path(d, from, to))
    g.u[static_cast<std::size_t>(l)] = static_cast<std::int8_t>(-g.u[static_cast<std::size_t>(l)]);
}

/// Flips one boundary pair link: toggles exactly that pair cycle's flux
/// (a single vortex, with its partner absorbed by the boundary).
inline void insert_dangling_vortex(GaugeConfig& g, int pair_index) {
  if (pair_index < 0 || pair_index >= static_cast<int>(g.u_pair.size()))
    throw input_error("pair index out of range");
  g.u_pair[static_cast<std::size_t>(pair_index)] =
      static_cast<std::int8_t>(-g.u_pair[static_cast<std::size_t>(pair_index)]);
}

// ---------------------------------------------------------------------------
// Serialization: ground-relative flip lists, deterministic order.
// ---------------------------------------------------------------------------

inline nlohmann::json gauge_to_json(const Lattice& lat, const GaugeConfig& g,
                                    const DanglingPairing* pairing = nullptr) {
  check_gauge(lat, g, pairing);
  nlohmann::json j;
  j["format"] = "gauge-config";
  j["version"] = kVersion;
  j["boundary"] = boundary_name(lat.geom.boundary);
  j["lx"] = lat.geom.lx;
  j["ly"] = lat.geom.ly;
  nlohmann::json flips = nlohmann::json::array();
  for (int l = 0; l < lat.n_links(); ++l)
    if (g.u[static_cast<std::size_t>(l)] == -1) flips.push_back(l);
  j["flips"] = std::move(flips);
  nlohmann::json pf = nlohmann::json::array();
  for (std::size_t k = 0; k < g.u_pair.size(); ++k)
    if (g.u_pair[k] == -1) pf.push_back(static_cast<int>(k));
  j["pair_flips"] = std::move(pf);
  return j;
}

inline GaugeConfig gauge_from_json(const Lattice& lat, const nlohmann::json& j,
                                   const DanglingPairing* pairing = nullptr) {
  if (!j.contains("format") || j.at("format") != "gauge-config")
    throw input_error("not a gauge-config document");
  if (j.at("version") != std::string(kVersion))
    throw input_error("unsupported gauge-config version");
  if (j.at("boundary") != boundary_name(lat.geom.boundary) ||
      j.at("lx").get<int>() != lat.geom.lx || j.at("ly").get<int>() != lat.geom.ly)
    throw input_error("gauge-config does not match lattice geometry");
  GaugeConfig g = ground_gauge(lat, pairing);
  for (int l : j.at("flips").get<std::vector<int>>()) {
    if (l < 0 || l >= lat.n_links()) throw input_error("link flip out of range");
    g.u[static_cast<std::size_t>(l)] = -1;
  }
  for (int k : j.at("pair_flips").get<std::vector<int>>()) {
    if (k < 0 || k >= static_cast<int>(g.u_pair.size()))
      throw input_error("pair flip out of range");
    g.u_pair[static_cast<std::size_t>(k)] = -1;
  }
  return g;
}

}  // namespace yk
