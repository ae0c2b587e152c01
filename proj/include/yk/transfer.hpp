#pragma once
// Register-mediated state transfer along the chiral boundary of the lattice.
//
// Two external spin-1/2 registers hang off dangling boundary sites a and b.
// In the conserved-flux fermion picture each register contributes one extra
// complex mode built from two Majoranas (g0, g3): the register excitation
// c^dag = (g0 - i g3)/2 costs energy delta_s, and the register-lattice
// exchange of strength g couples g0 to the Majorana at the dangling site.
//
// Sign convention: the matter matrix carries A = -kappa*u on lattice bonds,
// the sign produced by the exact spin-model reduction (see the spin oracle
// module), so every amplitude and phase computed here can be compared
// one-to-one with brute-force spin dynamics.  Spectra are invariant under the
// overall sign; only transferred phases would notice a flip.
//
// Evolution bookkeeping: a vector w holds the coefficients of an operator
// O = sum_j w_j gamma_j.  The transfer protocol tracks the Schroedinger
// picture operator O(t) = U(t) c_X^dag U(t)^dag, which obeys dw/dt = +A(t) w;
// the overlap amplitude onto register mode Y is the c-number
// {c_Y, O(t)} = 2 w_Y^dag w(t), an exact single-particle transition amplitude
// independent of the many-body vacuum.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "yk/common.hpp"
#include "yk/fermion.hpp"
#include "yk/gauge.hpp"
#include "yk/lattice.hpp"

namespace yk {

// ---------------------------------------------------------------------------
// Fast mode factorization.
//
// diagonalize_modes() solves the dense complex Hermitian problem for i*A.
// For droplet-scale systems it is cheaper to diagonalize the real symmetric
// matrix S = A^T A = -A^2: every positive eigenvalue eps^2 of S comes with a
// two-dimensional real eigenspace spanned by (v, u = A v / eps), and
// q = (v + i u)/sqrt(2) satisfies (iA) q = eps q.  Degenerate clusters are
// handled greedily: each new candidate is orthogonalized against the pairs
// already accepted; candidates that collapse are the u-partners of earlier
// modes and are skipped.
// ---------------------------------------------------------------------------

inline ModeBasis diagonalize_modes_fast(const QuadraticForm& qf,
                                        double zero_tol = 1e-8) {
  const int n = qf.n;
  if (n % 2 != 0) throw input_error("majorana count must be even");
  const int m = n / 2;
  Eigen::MatrixXd a(qf.A);
  Eigen::MatrixXd s = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success)
    throw numeric_error("mode factorization failed to converge");
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double scale = std::sqrt(std::max(lam(n - 1), 0.0));
  // Eigenvalues of S carry absolute noise ~ n*eps_mach*|S|, so eps = sqrt(lam)
  // is meaningless below sqrt(n*eps_mach)*|A|; cut there to keep exact zero
  // modes (e.g. an edge crossing pinned at a lattice momentum) out of the
  // positive-mode path.
  const double noise =
      std::sqrt(n * std::numeric_limits<double>::epsilon());
  const double zcut = std::max(zero_tol, noise) * std::max(scale, 1.0);

  std::vector<Eigen::VectorXd> kernel, vs, us;
  std::vector<double> eps_pos;
  for (int i = 0; i < n; ++i) {
    const double eps_i = std::sqrt(std::max(lam(i), 0.0));
    Eigen::VectorXd x = es.eigenvectors().col(i);
    if (eps_i <= zcut) {
      kernel.push_back(x);
      continue;
    }
    for (std::size_t p = 0; p < vs.size(); ++p) {
      x -= vs[p].dot(x) * vs[p];
      x -= us[p].dot(x) * us[p];
    }
    const double rn = x.norm();
    if (rn < 0.5) continue;  // u-partner of an accepted mode
    x /= rn;
    Eigen::VectorXd u = (a * x) / eps_i;
    for (std::size_t p = 0; p < vs.size(); ++p) {
      u -= vs[p].dot(u) * vs[p];
      u -= us[p].dot(u) * us[p];
    }
    u -= x.dot(u) * x;
    const double un = u.norm();
    if (std::abs(un - 1.0) > 1e-6)
      throw numeric_error("mode pairing degenerated in fast factorization");
    u /= un;
    vs.push_back(x);
    us.push_back(u);
    eps_pos.push_back(eps_i);
  }
  if (kernel.size() % 2 != 0)
    throw numeric_error("odd kernel dimension in fast factorization");
  if (static_cast<int>(vs.size() + kernel.size() / 2) != m)
    throw numeric_error("mode count mismatch in fast factorization");

  ModeBasis mb;
  mb.n = n;
  mb.eps = Eigen::VectorXd(m);
  mb.Q = Eigen::MatrixXcd(m, n);
  const std::complex<double> im(0.0, 1.0);
  int k = 0;
  for (std::size_t z = 0; z + 1 < kernel.size(); z += 2) {
    mb.eps(k) = 0.0;
    // Q row = q^dag with q = (z1 + i z2)/sqrt(2); any orthonormal kernel pair
    // gives a canonical zero mode.
    mb.Q.row(k) =
        ((kernel[z].cast<std::complex<double>>() -
          im * kernel[z + 1].cast<std::complex<double>>()) /
         std::sqrt(2.0))
            .transpose();
    ++k;
  }
  for (std::size_t p = 0; p < vs.size(); ++p) {
    mb.eps(k) = eps_pos[p];
    mb.Q.row(k) = ((vs[p].cast<std::complex<double>>() -
                    im * us[p].cast<std::complex<double>>()) /
                   std::sqrt(2.0))
                      .transpose();
    ++k;
  }
  mb.vacuum_energy = -0.5 * mb.eps.sum();
  return mb;
}

// ---------------------------------------------------------------------------
// Register setup and the extended matter matrix.
// ---------------------------------------------------------------------------

struct RegisterSetup {
  int site_a = -1;      // dangling boundary site coupled to register L
  int site_b = -1;      // dangling boundary site coupled to register R
  double g_l = 0.0;     // exchange strength, register L
  double g_r = 0.0;     // exchange strength, register R
  double delta_s = 0.0; // register splitting
  // Quadratic splitting modulation: the effective splitting while driven is
  // delta_s + stark * g(t)^2.  Setting stark to minus the second-order level
  // shift per unit g^2 keeps a driven register on resonance (the coupling
  // drags the level through repulsion against off-resonant modes).
  double stark_l = 0.0;
  double stark_r = 0.0;
};

inline void validate_registers(const Lattice& lat, const RegisterSetup& s) {
  if (s.site_a < 0 || s.site_a >= lat.n_sites() || !lat.is_dangling(s.site_a))
    throw input_error("register site a must be a dangling boundary site");
  if (s.site_b < 0 || s.site_b >= lat.n_sites() || !lat.is_dangling(s.site_b))
    throw input_error("register site b must be a dangling boundary site");
  if (s.site_a == s.site_b)
    throw input_error("registers must couple to distinct sites");
  if (!(s.delta_s > 0)) throw input_error("register splitting must be positive");
  if (s.g_l < 0 || s.g_r < 0)
    throw input_error("register couplings must be non-negative");
}

// Majorana layout of the extended system: lattice sites 0..N-1, then
// g0_L, g3_L, g0_R, g3_R.  The static part holds the lattice bonds and the
// register splittings; the couplings enter through unit generators so pulsed
// drives never rebuild the matrix.
struct ExtendedMatter {
  int n_lattice = 0;
  int site_a = -1, site_b = -1;
  double delta_s = 0.0;
  double stark_l = 0.0, stark_r = 0.0;
  Eigen::SparseMatrix<double> a_static;

  int n_total() const { return n_lattice + 4; }
  int il0() const { return n_lattice; }
  int il3() const { return n_lattice + 1; }
  int ir0() const { return n_lattice + 2; }
  int ir3() const { return n_lattice + 3; }

  // Action of A(t) = a_static + gl*E_l + gr*E_r on a coefficient vector.
  // E_x is the antisymmetric unit coupling A[g0_x, site] = -1 plus the
  // quadratic splitting correction stark_x * g^2 on the register pair.
  Eigen::VectorXcd apply(double gl, double gr,
                         const Eigen::VectorXcd& w) const {
    Eigen::VectorXd re = a_static * w.real();
    Eigen::VectorXd im = a_static * w.imag();
    Eigen::VectorXcd out(w.size());
    out.real() = re;
    out.imag() = im;
    out(il0()) += -gl * w(site_a);
    out(site_a) += gl * w(il0());
    out(ir0()) += -gr * w(site_b);
    out(site_b) += gr * w(ir0());
    const double dl = stark_l * gl * gl;
    const double dr = stark_r * gr * gr;
    if (dl != 0.0) {
      out(il0()) += dl * w(il3());
      out(il3()) += -dl * w(il0());
    }
    if (dr != 0.0) {
      out(ir0()) += dr * w(ir3());
      out(ir3()) += -dr * w(ir0());
    }
    return out;
  }

  QuadraticForm matter(double gl, double gr) const {
    QuadraticForm q;
    q.n = n_total();
    Eigen::SparseMatrix<double> full = a_static;
    std::vector<Eigen::Triplet<double>> tr;
    tr.emplace_back(il0(), site_a, -gl);
    tr.emplace_back(site_a, il0(), gl);
    tr.emplace_back(ir0(), site_b, -gr);
    tr.emplace_back(site_b, ir0(), gr);
    const double dl = stark_l * gl * gl;
    const double dr = stark_r * gr * gr;
    if (dl != 0.0) {
      tr.emplace_back(il0(), il3(), dl);
      tr.emplace_back(il3(), il0(), -dl);
    }
    if (dr != 0.0) {
      tr.emplace_back(ir0(), ir3(), dr);
      tr.emplace_back(ir3(), ir0(), -dr);
    }
    Eigen::SparseMatrix<double> coup(q.n, q.n);
    coup.setFromTriplets(tr.begin(), tr.end());
    q.A = full + coup;
    return q;
  }
};

inline ExtendedMatter extend_hamiltonian(const Lattice& lat,
                                         const GaugeConfig& gauge,
                                         const RegisterSetup& setup,
                                         double kappa = 1.0) {
  validate_registers(lat, setup);
  QuadraticForm base = assemble_majorana(lat, gauge, -kappa);
  ExtendedMatter ext;
  ext.n_lattice = base.n;
  ext.site_a = setup.site_a;
  ext.site_b = setup.site_b;
  ext.delta_s = setup.delta_s;
  ext.stark_l = setup.stark_l;
  ext.stark_r = setup.stark_r;
  Eigen::SparseMatrix<double> a(ext.n_total(), ext.n_total());
  std::vector<Eigen::Triplet<double>> tr;
  for (int o = 0; o < base.A.outerSize(); ++o)
    for (Eigen::SparseMatrix<double>::InnerIterator it(base.A, o); it; ++it)
      tr.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                      it.value());
  // Register splitting delta_s * c^dag c = const + (i delta_s / 2) g0 g3,
  // i.e. A[g0, g3] = +delta_s in the H = (i/4) gamma^T A gamma convention.
  tr.emplace_back(ext.il0(), ext.il3(), setup.delta_s);
  tr.emplace_back(ext.il3(), ext.il0(), -setup.delta_s);
  tr.emplace_back(ext.ir0(), ext.ir3(), setup.delta_s);
  tr.emplace_back(ext.ir3(), ext.ir0(), -setup.delta_s);
  a.setFromTriplets(tr.begin(), tr.end());
  ext.a_static = a;
  return ext;
}

// Coefficient vectors of the register creation operators
// c_X^dag = (g0_X - i g3_X)/2, normalized to 2 w^dag w = 1.
inline Eigen::VectorXcd register_creation_l(const ExtendedMatter& ext) {
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(ext.n_total());
  w(ext.il0()) = 0.5;
  w(ext.il3()) = std::complex<double>(0.0, -0.5);
  return w;
}

inline Eigen::VectorXcd register_creation_r(const ExtendedMatter& ext) {
  Eigen::VectorXcd w = Eigen::VectorXcd::Zero(ext.n_total());
  w(ext.ir0()) = 0.5;
  w(ext.ir3()) = std::complex<double>(0.0, -0.5);
  return w;
}

// Overlap amplitudes {c_X, O(t)} = 2 w_X^dag w.
inline std::complex<double> amp_on_l(const ExtendedMatter& ext,
                                     const Eigen::VectorXcd& w) {
  return w(ext.il0()) + std::complex<double>(0.0, 1.0) * w(ext.il3());
}

inline std::complex<double> amp_on_r(const ExtendedMatter& ext,
                                     const Eigen::VectorXcd& w) {
  return w(ext.ir0()) + std::complex<double>(0.0, 1.0) * w(ext.ir3());
}

// ---------------------------------------------------------------------------
// Number-conserving reduction onto lattice modes.
//
// Rewriting the coupling in lattice eigenmodes and dropping pair-creation
// terms leaves the arrow-shaped single-particle Hamiltonian
//   diag(eps_1..eps_M, delta_s, delta_s)
//   H[L,k] = -(i/sqrt 2) g_l conj(Q[k,a]),   H[R,k] = -(i/sqrt 2) g_r conj(Q[k,b]).
// The full engines keep the dropped terms; the difference is the secular
// approximation error.
// ---------------------------------------------------------------------------

struct SecularModel {
  Eigen::VectorXd eps;      // lattice mode energies, ascending
  Eigen::VectorXcd qa, qb;  // mode weights at the register sites
  double delta_s = 0.0;

  int n_modes() const { return static_cast<int>(eps.size()); }
  int il() const { return n_modes(); }
  int ir() const { return n_modes() + 1; }

  Eigen::MatrixXcd matrix(double gl, double gr) const {
    const int m = n_modes();
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(m + 2, m + 2);
    const std::complex<double> im(0.0, 1.0);
    for (int k = 0; k < m; ++k) {
      h(k, k) = eps(k);
      h(il(), k) = -im / std::sqrt(2.0) * gl * std::conj(qa(k));
      h(k, il()) = std::conj(h(il(), k));
      h(ir(), k) = -im / std::sqrt(2.0) * gr * std::conj(qb(k));
      h(k, ir()) = std::conj(h(ir(), k));
    }
    h(il(), il()) = delta_s;
    h(ir(), ir()) = delta_s;
    return h;
  }
};

inline SecularModel reduce_to_modes(const ModeBasis& basis,
                                    const RegisterSetup& setup) {
  if (setup.site_a < 0 || setup.site_a >= basis.n || setup.site_b < 0 ||
      setup.site_b >= basis.n)
    throw input_error("register site outside the mode basis");
  SecularModel m;
  m.eps = basis.eps;
  m.qa = basis.Q.col(setup.site_a);
  m.qb = basis.Q.col(setup.site_b);
  m.delta_s = setup.delta_s;
  return m;
}

// ---------------------------------------------------------------------------
// Degenerate-cluster weight concentration.
//
// The two boundaries of a cylinder contribute one mode each at every edge
// energy, split only by tunnelling across the bulk, and the factorization
// returns an arbitrary unitary mixture of such a near-degenerate pair.  A
// register attached at one site couples only to the combination that carries
// weight there, so within each degenerate cluster we rotate the rows of Q
// until that combination is a single mode and its partners carry none.  This
// is a unitary change of mode basis: energies, completeness and the generated
// dynamics are untouched.
// ---------------------------------------------------------------------------

inline void concentrate_mode_weight(ModeBasis& basis, int site,
                                    double degeneracy_tol = 1e-7) {
  if (site < 0 || site >= basis.n)
    throw input_error("weight site outside the mode basis");
  const int m = static_cast<int>(basis.eps.size());
  if (m == 0) return;
  const double scale = std::max(basis.eps.maxCoeff(), 1.0);
  int lo = 0;
  while (lo < m) {
    int hi = lo + 1;
    while (hi < m &&
           basis.eps(hi) - basis.eps(hi - 1) <= degeneracy_tol * scale)
      ++hi;
    const int c = hi - lo;
    if (c >= 2) {
      Eigen::VectorXcd a(c);
      for (int j = 0; j < c; ++j) a(j) = basis.Q(lo + j, site);
      const double an = a.norm();
      if (an > 1e-14) {
        // Unitary with first row a^dag/|a|; the rest completes the basis by
        // twice-iterated Gram-Schmidt over coordinate vectors.
        std::vector<Eigen::VectorXcd> cols;
        cols.push_back(a / an);
        for (int e = 0; e < c && static_cast<int>(cols.size()) < c; ++e) {
          Eigen::VectorXcd w = Eigen::VectorXcd::Zero(c);
          w(e) = 1.0;
          for (const auto& u : cols) w -= u.dot(w) * u;
          for (const auto& u : cols) w -= u.dot(w) * u;
          const double wn = w.norm();
          if (wn > 0.1) cols.push_back(w / wn);
        }
        if (static_cast<int>(cols.size()) == c) {
          const Eigen::MatrixXcd block = basis.Q.middleRows(lo, c);
          for (int j = 0; j < c; ++j)
            basis.Q.row(lo + j) = cols[j].adjoint() * block;
        }
      }
    }
    lo = hi;
  }
}

// ---------------------------------------------------------------------------
// Edge-mode bookkeeping.
// ---------------------------------------------------------------------------

inline std::vector<int> edge_mode_indices(const Eigen::VectorXd& eps,
                                          double bulk_gap,
                                          double band_margin = 0.9) {
  if (!(bulk_gap > 0)) throw input_error("bulk gap must be positive");
  std::vector<int> out;
  for (int k = 0; k < eps.size(); ++k)
    if (eps(k) > 1e-9 && eps(k) < band_margin * bulk_gap) out.push_back(k);
  return out;
}

inline int count_edge_modes(const Eigen::VectorXd& eps, double bulk_gap,
                            double band_margin = 0.9) {
  return static_cast<int>(edge_mode_indices(eps, bulk_gap, band_margin).size());
}

// ---------------------------------------------------------------------------
// Single-mode (dot) transfer plan.
//
// Tuning delta_s onto one edge mode and balancing g_r = g_l |qa|/|qb| makes
// (mode, L, R) a resonant three-level system with hopping t = g_l |qa|/sqrt 2;
// a half Rabi period tau = pi/(sqrt 2 t) swaps the registers and imprints the
// phase phi = arg qb - arg qa:  u_RL(tau) = -exp(-i phi) after the dynamical
// phase exp(-i delta_s tau) is removed.
// ---------------------------------------------------------------------------

struct DotPlan {
  int mode = -1;
  double eps_mode = 0.0;  // run the registers at delta_s = eps_mode
  double g_l = 0.0, g_r = 0.0;
  double t_hop = 0.0;
  double tau = 0.0;
  double phi = 0.0;
  double min_spacing = 0.0;
  double resolvability = 0.0;  // sqrt(2) t / min_spacing
  double weight_a = 0.0, weight_b = 0.0;
  bool capped = false;
};

struct DotOptions {
  double g_max = -1.0;      // <0: eps_mode / 10
  double r_max = 0.1;       // resolvability budget
  double weight_min = 1e-3; // minimum |Q| weight at a register site
};

inline DotPlan dot_plan(const SecularModel& m, int mode, double g_l,
                        const DotOptions& opts = {}) {
  if (mode < 0 || mode >= m.n_modes())
    throw input_error("dot mode index out of range");
  if (!(g_l > 0)) throw input_error("dot coupling must be positive");
  DotPlan p;
  p.mode = mode;
  p.eps_mode = m.eps(mode);
  if (!(p.eps_mode > 0))
    throw input_error("dot mode must carry positive energy");
  p.weight_a = std::abs(m.qa(mode));
  p.weight_b = std::abs(m.qb(mode));
  if (p.weight_a < opts.weight_min || p.weight_b < opts.weight_min)
    throw input_error(
        "selected mode has negligible weight at a register site; pick "
        "another mode or move the register");
  p.g_l = g_l;
  p.g_r = g_l * p.weight_a / p.weight_b;
  const double g_cap = opts.g_max < 0 ? p.eps_mode / 10.0 : opts.g_max;
  const double g_hi = std::max(p.g_l, p.g_r);
  if (g_cap > 0 && g_hi > g_cap) {
    const double s = g_cap / g_hi;
    p.g_l *= s;
    p.g_r *= s;
    p.capped = true;
  }
  p.t_hop = p.g_l * p.weight_a / std::sqrt(2.0);
  p.tau = M_PI / (std::sqrt(2.0) * p.t_hop);
  p.phi = std::arg(m.qb(mode) * std::conj(m.qa(mode)));
  double spacing = std::numeric_limits<double>::infinity();
  if (mode > 0) spacing = std::min(spacing, p.eps_mode - m.eps(mode - 1));
  if (mode + 1 < m.n_modes())
    spacing = std::min(spacing, m.eps(mode + 1) - p.eps_mode);
  p.min_spacing = spacing;
  p.resolvability = std::isfinite(spacing)
                        ? std::sqrt(2.0) * p.t_hop / spacing
                        : 0.0;
  if (p.resolvability > opts.r_max)
    throw input_error(
        "couplings too strong to resolve a single edge mode; reduce g_l");
  return p;
}

// Deterministic helper: among edge modes in the central third of the branch,
// pick the one both registers see most strongly.
inline int select_dot_mode(const SecularModel& m, double bulk_gap,
                           double band_margin = 0.9) {
  std::vector<int> edge = edge_mode_indices(m.eps, bulk_gap, band_margin);
  if (edge.empty()) throw input_error("no edge modes below the bulk gap");
  const double lo = m.eps(edge.front());
  const double hi = m.eps(edge.back());
  const double mid = 0.5 * (lo + hi), third = (hi - lo) / 6.0;
  int best = -1;
  double best_w = -1.0;
  for (int k : edge) {
    if (std::abs(m.eps(k) - mid) > third && hi > lo) continue;
    const double w = std::min(std::abs(m.qa(k)), std::abs(m.qb(k)));
    if (w > best_w) {
      best_w = w;
      best = k;
    }
  }
  if (best < 0) best = edge[edge.size() / 2];
  return best;
}

inline RegisterSetup with_resonance(RegisterSetup s, const DotPlan& p) {
  s.delta_s = p.eps_mode;
  s.g_l = p.g_l;
  s.g_r = p.g_r;
  return s;
}

// ---------------------------------------------------------------------------
// Evolution engines and traces.
// ---------------------------------------------------------------------------

struct TransferTrace {
  Eigen::VectorXd t;
  Eigen::VectorXcd amp_l, amp_r;  // register-mode amplitudes
  Eigen::VectorXd edge_prob;      // probability on the lattice
  Eigen::VectorXd norm;           // conserved total (1 for unit inputs)
  std::vector<Eigen::VectorXd> monitor_prob;  // optional site windows
  Eigen::VectorXcd probe_amp;     // optional single-site amplitude
  Eigen::VectorXcd w_final;       // state at the last sampled time
};

struct EvolveOptions {
  int n_samples = 400;
  double dt_scale = 1.0;
  double norm_tol = 1e-8;
  int probe_site = -1;
  std::vector<std::vector<int>> monitors;
};

// Closed-form propagation in a fixed mode basis of the extended system:
// w(t) = Q^H (e^{-i eps t} . (Q w0)) + Q^T (e^{+i eps t} . conj(Q conj(w0))).
inline Eigen::VectorXcd mode_evolve(const ModeBasis& mb,
                                    const Eigen::VectorXcd& w0, double t) {
  const std::complex<double> im(0.0, 1.0);
  Eigen::VectorXcd alpha = mb.Q * w0;
  Eigen::VectorXcd beta = (mb.Q * w0.conjugate()).conjugate();
  Eigen::ArrayXcd ph = (-im * t * mb.eps.array()).exp();
  alpha.array() *= ph;
  beta.array() *= ph.conjugate();
  return mb.Q.adjoint() * alpha + mb.Q.transpose() * beta;
}

namespace detail {

inline double lattice_prob(const ExtendedMatter& ext,
                           const Eigen::VectorXcd& w) {
  return 2.0 * w.head(ext.n_lattice).squaredNorm();
}

inline void record_sample(const ExtendedMatter& ext, const EvolveOptions& opts,
                          const Eigen::VectorXcd& w, int i,
                          TransferTrace* tr) {
  tr->amp_l(i) = amp_on_l(ext, w);
  tr->amp_r(i) = amp_on_r(ext, w);
  tr->edge_prob(i) = lattice_prob(ext, w);
  tr->norm(i) = 2.0 * w.squaredNorm();
  for (std::size_t mwin = 0; mwin < opts.monitors.size(); ++mwin) {
    double p = 0;
    for (int j : opts.monitors[mwin]) p += 2.0 * std::norm(w(j));
    tr->monitor_prob[mwin](i) = p;
  }
  if (opts.probe_site >= 0) tr->probe_amp(i) = w(opts.probe_site);
}

inline TransferTrace make_trace(const EvolveOptions& opts, int n) {
  TransferTrace tr;
  tr.t = Eigen::VectorXd(n);
  tr.amp_l = Eigen::VectorXcd(n);
  tr.amp_r = Eigen::VectorXcd(n);
  tr.edge_prob = Eigen::VectorXd(n);
  tr.norm = Eigen::VectorXd(n);
  tr.monitor_prob.assign(opts.monitors.size(), Eigen::VectorXd(n));
  if (opts.probe_site >= 0) tr.probe_amp = Eigen::VectorXcd(n);
  return tr;
}

}  // namespace detail

// Constant couplings, closed form via the extended mode basis.
inline TransferTrace evolve_full(const ExtendedMatter& ext,
                                 const ModeBasis& mb_ext,
                                 const Eigen::VectorXcd& w0, double t_final,
                                 const EvolveOptions& opts = {}) {
  if (mb_ext.n != ext.n_total())
    throw input_error("mode basis does not match the extended system");
  const int n = opts.n_samples + 1;
  TransferTrace tr = detail::make_trace(opts, n);
  for (int i = 0; i < n; ++i) {
    const double t = t_final * i / opts.n_samples;
    tr.t(i) = t;
    Eigen::VectorXcd w = mode_evolve(mb_ext, w0, t);
    detail::record_sample(ext, opts, w, i, &tr);
    if (i == opts.n_samples) tr.w_final = w;
  }
  return tr;
}

// Piecewise-linear pulse on a uniform grid; zero outside its window.
struct Pulse {
  double t0 = 0.0, dt = 0.0;
  Eigen::VectorXd g;
  bool capped = false;

  double t_end() const {
    return g.size() > 1 ? t0 + dt * (g.size() - 1) : t0;
  }
  double max_abs() const { return g.size() ? g.cwiseAbs().maxCoeff() : 0.0; }
  double value(double t) const {
    if (g.size() == 0) return 0.0;
    const double s = (t - t0) / dt;
    if (s <= 0.0) return t == t0 ? g(0) : 0.0;
    if (s >= g.size() - 1.0)
      return t <= t_end() ? g(g.size() - 1) : 0.0;
    const int i = static_cast<int>(s);
    const double f = s - i;
    return (1 - f) * g(i) + f * g(i + 1);
  }
};

// Time-dependent couplings, classical RK4 on dw/dt = +A(t) w.
inline TransferTrace evolve_pulsed(const ExtendedMatter& ext, const Pulse& pl,
                                   const Pulse& pr, const Eigen::VectorXcd& w0,
                                   double t0, double t1,
                                   const EvolveOptions& opts = {}) {
  if (!(t1 > t0)) throw input_error("evolution window must be non-empty");
  double bound = 0.0;
  {
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(ext.n_total());
    for (int o = 0; o < ext.a_static.outerSize(); ++o)
      for (Eigen::SparseMatrix<double>::InnerIterator it(ext.a_static, o); it;
           ++it)
        rowsum(it.row()) += std::abs(it.value());
    bound = rowsum.maxCoeff() + pl.max_abs() + pr.max_abs() +
            std::abs(ext.stark_l) * pl.max_abs() * pl.max_abs() +
            std::abs(ext.stark_r) * pr.max_abs() * pr.max_abs();
  }
  const double dt_want = opts.dt_scale * 0.05 / std::max(bound, 1e-12);
  const long n_steps =
      std::max<long>(1, static_cast<long>(std::ceil((t1 - t0) / dt_want)));
  const double dt = (t1 - t0) / static_cast<double>(n_steps);

  const int n_samples =
      static_cast<int>(std::min<long>(opts.n_samples, n_steps));
  const int n = n_samples + 1;
  TransferTrace tr = detail::make_trace(opts, n);
  const double norm0 = 2.0 * w0.squaredNorm();

  auto deriv = [&](double t, const Eigen::VectorXcd& w) {
    return ext.apply(pl.value(t), pr.value(t), w);
  };

  Eigen::VectorXcd w = w0;
  long next_sample = 0;
  int si = 0;
  for (long step = 0; step <= n_steps; ++step) {
    const double t = t0 + dt * static_cast<double>(step);
    if (step == next_sample) {
      tr.t(si) = t;
      detail::record_sample(ext, opts, w, si, &tr);
      if (std::abs(tr.norm(si) - norm0) >
          opts.norm_tol * std::max(1.0, norm0))
        throw numeric_error(
            "norm drift exceeded tolerance during pulsed evolution; reduce "
            "dt_scale");
      ++si;
      next_sample = si < n ? (n_steps * si) / n_samples : n_steps + 1;
      if (si < n && next_sample <= step) next_sample = step + 1;
    }
    if (step == n_steps) break;
    Eigen::VectorXcd k1 = deriv(t, w);
    Eigen::VectorXcd k2 = deriv(t + 0.5 * dt, w + (0.5 * dt) * k1);
    Eigen::VectorXcd k3 = deriv(t + 0.5 * dt, w + (0.5 * dt) * k2);
    Eigen::VectorXcd k4 = deriv(t + dt, w + dt * k3);
    w += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  tr.w_final = w;
  return tr;
}

// Number-conserving engine: Schroedinger evolution of the arrow Hamiltonian.
inline TransferTrace evolve_secular(const SecularModel& m, double gl,
                                    double gr, const Eigen::VectorXcd& psi0,
                                    double t_final,
                                    const EvolveOptions& opts = {}) {
  const int dim = m.n_modes() + 2;
  if (psi0.size() != dim)
    throw input_error("secular state dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m.matrix(gl, gr));
  if (es.info() != Eigen::Success)
    throw numeric_error("secular eigensolve failed");
  const Eigen::VectorXcd c0 = es.eigenvectors().adjoint() * psi0;
  const std::complex<double> im(0.0, 1.0);
  const int n = opts.n_samples + 1;
  TransferTrace tr;
  tr.t = Eigen::VectorXd(n);
  tr.amp_l = Eigen::VectorXcd(n);
  tr.amp_r = Eigen::VectorXcd(n);
  tr.edge_prob = Eigen::VectorXd(n);
  tr.norm = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) {
    const double t = t_final * i / opts.n_samples;
    Eigen::VectorXcd c = c0;
    c.array() *= (-im * t * es.eigenvalues().array()).exp();
    Eigen::VectorXcd psi = es.eigenvectors() * c;
    tr.t(i) = t;
    tr.amp_l(i) = psi(m.il());
    tr.amp_r(i) = psi(m.ir());
    tr.edge_prob(i) = psi.head(m.n_modes()).squaredNorm();
    tr.norm(i) = psi.squaredNorm();
    if (i == opts.n_samples) tr.w_final = psi;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Two-register propagator and gate extraction.
// ---------------------------------------------------------------------------

struct RegisterPropagator {
  std::complex<double> u_ll{0, 0}, u_lr{0, 0}, u_rl{0, 0}, u_rr{0, 0};
  std::complex<double> det() const { return u_ll * u_rr - u_lr * u_rl; }
};

// Remove the common idle rotation exp(-i delta_s T) of the register modes.
inline RegisterPropagator remove_idle_phase(RegisterPropagator u,
                                            double delta_s, double duration) {
  const std::complex<double> ph =
      std::exp(std::complex<double>(0.0, delta_s * duration));
  u.u_ll *= ph;
  u.u_lr *= ph;
  u.u_rl *= ph;
  u.u_rr *= ph;
  return u;
}

inline RegisterPropagator propagator_secular(const SecularModel& m, double gl,
                                             double gr, double tau) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m.matrix(gl, gr));
  if (es.info() != Eigen::Success)
    throw numeric_error("secular eigensolve failed");
  const std::complex<double> im(0.0, 1.0);
  Eigen::ArrayXcd ph = (-im * tau * es.eigenvalues().array()).exp();
  auto column = [&](int idx) {
    Eigen::VectorXcd c = es.eigenvectors().adjoint().col(idx);
    c.array() *= ph;
    return Eigen::VectorXcd(es.eigenvectors() * c);
  };
  Eigen::VectorXcd pl = column(m.il()), pr = column(m.ir());
  RegisterPropagator u;
  u.u_ll = pl(m.il());
  u.u_rl = pl(m.ir());
  u.u_lr = pr(m.il());
  u.u_rr = pr(m.ir());
  return u;
}

inline RegisterPropagator propagator_full(const ExtendedMatter& ext,
                                          const ModeBasis& mb_ext,
                                          double tau) {
  Eigen::VectorXcd wl = mode_evolve(mb_ext, register_creation_l(ext), tau);
  Eigen::VectorXcd wr = mode_evolve(mb_ext, register_creation_r(ext), tau);
  RegisterPropagator u;
  u.u_ll = amp_on_l(ext, wl);
  u.u_rl = amp_on_r(ext, wl);
  u.u_lr = amp_on_l(ext, wr);
  u.u_rr = amp_on_r(ext, wr);
  return u;
}

inline RegisterPropagator propagator_pulsed(const ExtendedMatter& ext,
                                            const Pulse& pl, const Pulse& pr,
                                            double t0, double t1,
                                            const EvolveOptions& opts = {},
                                            TransferTrace* trace_l = nullptr,
                                            TransferTrace* trace_r = nullptr) {
  TransferTrace tl =
      evolve_pulsed(ext, pl, pr, register_creation_l(ext), t0, t1, opts);
  TransferTrace tr =
      evolve_pulsed(ext, pl, pr, register_creation_r(ext), t0, t1, opts);
  RegisterPropagator u;
  const int last = static_cast<int>(tl.t.size()) - 1;
  u.u_ll = tl.amp_l(last);
  u.u_rl = tl.amp_r(last);
  u.u_lr = tr.amp_l(last);
  u.u_rr = tr.amp_r(last);
  if (trace_l) *trace_l = std::move(tl);
  if (trace_r) *trace_r = std::move(tr);
  return u;
}

// Two-register gate in the basis |q_L q_R> with index (n_L << 1) | n_R,
// spin-down = excited register.  The spectator Majoranas g1_L, g1_R are
// paired into i g1_L g1_R = +1; transporting an excitation past that pair is
// what produces the +-i factors on the off-diagonal blocks and the sign on
// the doubly occupied amplitude.
inline Eigen::Matrix4cd gate_from_propagator(const RegisterPropagator& u) {
  Eigen::Matrix4cd g = Eigen::Matrix4cd::Zero();
  const std::complex<double> im(0.0, 1.0);
  g(0, 0) = 1.0;
  g(1, 1) = u.u_rr;
  g(1, 2) = im * u.u_rl;
  g(2, 1) = -im * u.u_lr;
  g(2, 2) = u.u_ll;
  g(3, 3) = u.det();
  return g;
}

// Target of a balanced single-mode transfer with transferred phase phi.
inline Eigen::Matrix4cd ideal_dot_gate(double phi) {
  Eigen::Matrix4cd g = Eigen::Matrix4cd::Zero();
  const std::complex<double> im(0.0, 1.0);
  g(0, 0) = 1.0;
  g(1, 2) = -im * std::exp(std::complex<double>(0.0, -phi));
  g(2, 1) = im * std::exp(std::complex<double>(0.0, phi));
  g(3, 3) = -1.0;
  return g;
}

inline Eigen::Vector4d gate_leakage(const Eigen::Matrix4cd& g) {
  Eigen::Vector4d out;
  for (int q = 0; q < 4; ++q) out(q) = 1.0 - g.col(q).squaredNorm();
  return out;
}

// Overlap fidelity |Tr(T^dag D G)| / 4 maximized over the free single-qubit
// z rotations D = diag(1, e^{i th_r}, e^{i th_l}, e^{i(th_l + th_r)}).
struct ZOptResult {
  double fidelity = 0.0;
  double theta_l = 0.0, theta_r = 0.0;
};

inline ZOptResult gate_fidelity_zopt(const Eigen::Matrix4cd& gate,
                                     const Eigen::Matrix4cd& target) {
  std::complex<double> c0 = 0, c1 = 0, c2 = 0, c3 = 0;
  for (int q = 0; q < 4; ++q) {
    c0 += std::conj(target(0, q)) * gate(0, q);
    c1 += std::conj(target(1, q)) * gate(1, q);
    c2 += std::conj(target(2, q)) * gate(2, q);
    c3 += std::conj(target(3, q)) * gate(3, q);
  }
  auto val = [&](double th_l) {
    const std::complex<double> ph = std::exp(std::complex<double>(0.0, th_l));
    return std::abs(c0 + c2 * ph) + std::abs(c1 + c3 * ph);
  };
  double best_th = 0.0, best = -1.0;
  const int ngrid = 2048;
  for (int i = 0; i < ngrid; ++i) {
    const double th = 2.0 * M_PI * i / ngrid;
    const double v = val(th);
    if (v > best) {
      best = v;
      best_th = th;
    }
  }
  double lo = best_th - 2.0 * M_PI / ngrid, hi = best_th + 2.0 * M_PI / ngrid;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = val(x1), f2 = val(x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = val(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = val(x1);
    }
  }
  ZOptResult out;
  out.theta_l = 0.5 * (lo + hi);
  const std::complex<double> ph =
      std::exp(std::complex<double>(0.0, out.theta_l));
  const std::complex<double> ta = c0 + c2 * ph, tb = c1 + c3 * ph;
  out.theta_r = std::arg(ta) - std::arg(tb);
  out.fidelity =
      std::abs(ta + tb * std::exp(std::complex<double>(0.0, out.theta_r))) /
      4.0;
  return out;
}

// Same overlap with the z-rotation angles frozen (e.g. at values calibrated
// on a reference run) instead of re-optimized.
inline double gate_fidelity_fixed_z(const Eigen::Matrix4cd& gate,
                                    const Eigen::Matrix4cd& target,
                                    double theta_l, double theta_r) {
  std::complex<double> acc = 0;
  const std::complex<double> pl = std::exp(std::complex<double>(0.0, theta_l));
  const std::complex<double> pr = std::exp(std::complex<double>(0.0, theta_r));
  const std::complex<double> row_ph[4] = {1.0, pr, pl, pl * pr};
  for (int r = 0; r < 4; ++r)
    for (int q = 0; q < 4; ++q)
      acc += std::conj(target(r, q)) * row_ph[r] * gate(r, q);
  return std::abs(acc) / 4.0;
}

struct GateResult {
  Eigen::Matrix4cd gate;
  Eigen::Vector4d leakage;
  double fidelity = 0.0;
  double theta_l = 0.0, theta_r = 0.0;
  double phi_target = 0.0;
};

inline GateResult extract_dot_gate(const RegisterPropagator& u_tilde,
                                   double phi_target) {
  GateResult out;
  out.gate = gate_from_propagator(u_tilde);
  out.leakage = gate_leakage(out.gate);
  out.phi_target = phi_target;
  ZOptResult z = gate_fidelity_zopt(out.gate, ideal_dot_gate(phi_target));
  out.fidelity = z.fidelity;
  out.theta_l = z.theta_l;
  out.theta_r = z.theta_r;
  return out;
}

// ---------------------------------------------------------------------------
// Boundary geometry helpers.
// ---------------------------------------------------------------------------

namespace detail {

struct WalkGeometry {
  int walk = -1;
  std::vector<double> cum;          // arc length from walk site 0 to site i
  double perimeter = 0.0;
  std::vector<int> pos_of_site;     // first walk index per site, -1 elsewhere
};

inline WalkGeometry walk_geometry(const Lattice& lat, int walk) {
  if (walk < 0 || walk >= static_cast<int>(lat.walks.size()))
    throw input_error("boundary walk index out of range");
  const BoundaryWalk& bw = lat.walks[walk];
  WalkGeometry wg;
  wg.walk = walk;
  const int n = static_cast<int>(bw.sites.size());
  wg.cum.resize(n, 0.0);
  wg.pos_of_site.assign(lat.sites.size(), -1);
  // On a cylinder the embedding coordinates are unwrapped along the periodic
  // cell axis, so the walk step across the seam must be reduced to its
  // minimum image or it would count a full period of phantom length.
  double period_x = 0.0, period_y = 0.0;
  if (lat.geom.boundary == Boundary::cylinder) {
    period_x = -0.5 * lat.geom.ly;
    period_y = 0.5 * std::sqrt(3.0) * lat.geom.ly;
  }
  const double period_sq = period_x * period_x + period_y * period_y;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (wg.pos_of_site[bw.sites[i]] < 0) wg.pos_of_site[bw.sites[i]] = i;
    wg.cum[i] = acc;
    const Site& s0 = lat.sites[bw.sites[i]];
    const Site& s1 = lat.sites[bw.sites[(i + 1) % n]];
    double dx = s1.px - s0.px, dy = s1.py - s0.py;
    if (period_sq > 0) {
      const double m = std::round((dx * period_x + dy * period_y) / period_sq);
      dx -= m * period_x;
      dy -= m * period_y;
    }
    acc += std::hypot(dx, dy);
  }
  wg.perimeter = acc;
  return wg;
}

inline double wrap_arc(double x, double perimeter) {
  x = std::fmod(x, perimeter);
  if (x < 0) x += perimeter;
  return x;
}

inline double signed_arc(double x, double perimeter) {
  x = wrap_arc(x, perimeter);
  return x > 0.5 * perimeter ? x - perimeter : x;
}

}  // namespace detail

inline int dangling_walk_of(const Lattice& lat, int site) {
  const int d = lat.dangling_index(site);
  if (d < 0) throw input_error("site is not a dangling boundary site");
  return lat.dangling_walk[d];
}

// Sites within +-half_len walk steps of a boundary site, deduplicated.
inline std::vector<int> walk_window(const Lattice& lat, int walk,
                                    int center_site, int half_len) {
  detail::WalkGeometry wg = detail::walk_geometry(lat, walk);
  const int pc = wg.pos_of_site[center_site];
  if (pc < 0) throw input_error("center site does not lie on the walk");
  const int n = static_cast<int>(lat.walks[walk].sites.size());
  std::vector<int> out;
  for (int off = -half_len; off <= half_len; ++off) {
    const int idx = ((pc + off) % n + n) % n;
    out.push_back(lat.walks[walk].sites[idx]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline double walk_perimeter(const Lattice& lat, int walk) {
  return detail::walk_geometry(lat, walk).perimeter;
}

// Walk site closest to a given arc displacement from a reference site,
// measured along direction dir.
inline int walk_site_at_arc(const Lattice& lat, int walk, int from_site,
                            double arc, int dir) {
  detail::WalkGeometry wg = detail::walk_geometry(lat, walk);
  const int pf = wg.pos_of_site[from_site];
  if (pf < 0) throw input_error("reference site does not lie on the walk");
  const double target =
      detail::wrap_arc(wg.cum[pf] + dir * arc, wg.perimeter);
  const int n = static_cast<int>(wg.cum.size());
  int best = pf;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double d = std::abs(
        detail::signed_arc(wg.cum[i] - target, wg.perimeter));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return lat.walks[walk].sites[best];
}

// Direction of chiral motion along a boundary walk: build a localized
// superposition of edge modes at site a, evolve it a short fraction of the
// round trip in closed form, and read off the sign of the mean displacement.
inline int probe_edge_direction(const Lattice& lat, const ModeBasis& basis,
                                int site_a, const std::vector<int>& edge_modes,
                                int center_mode, double spacing) {
  if (edge_modes.empty()) throw input_error("no edge modes supplied");
  const int walk = dangling_walk_of(lat, site_a);
  detail::WalkGeometry wg = detail::walk_geometry(lat, walk);
  const int pa = wg.pos_of_site[site_a];
  if (pa < 0) throw numeric_error("dangling site missing from its walk");

  const double eps0 = basis.eps(center_mode);
  const double width = 3.0 * spacing;
  std::vector<std::complex<double>> coef(edge_modes.size());
  for (std::size_t i = 0; i < edge_modes.size(); ++i) {
    const int k = edge_modes[i];
    const std::complex<double> qa = std::conj(basis.Q(k, site_a));
    const double w =
        std::exp(-std::pow((basis.eps(k) - eps0) / width, 2) / 2.0);
    coef[i] = std::abs(qa) > 1e-12
                  ? w * std::conj(qa) / std::abs(qa)
                  : std::complex<double>(w, 0.0);
  }
  const double t_probe = 0.1 * 2.0 * M_PI / spacing;
  Eigen::VectorXcd w_t = Eigen::VectorXcd::Zero(basis.n);
  const std::complex<double> im(0.0, 1.0);
  for (std::size_t i = 0; i < edge_modes.size(); ++i) {
    const int k = edge_modes[i];
    const std::complex<double> ph =
        std::exp(-im * basis.eps(k) * t_probe) * coef[i];
    w_t += ph * basis.Q.row(k).adjoint();
  }
  double num = 0.0, den = 0.0;
  const BoundaryWalk& bw = lat.walks[walk];
  for (std::size_t i = 0; i < bw.sites.size(); ++i) {
    const double p = std::norm(w_t(bw.sites[i]));
    const double d =
        detail::signed_arc(wg.cum[i] - wg.cum[pa], wg.perimeter);
    num += p * d;
    den += p;
  }
  if (den <= 0) throw numeric_error("edge probe carries no boundary weight");
  return num / den >= 0 ? +1 : -1;
}

// ---------------------------------------------------------------------------
// Wavepacket (broadband) transfer: pulse shaping and planning.
//
// A register resonant with edge mode k~ leaks into the edge continuum at the
// local rate v_loc = spacing / (pi |Q(k~, site)|^2).  Driving with
//   g(t) = sqrt(v_loc) f(t) / sqrt(int_t^inf |f|^2)
// emits a packet whose envelope is exactly f; running the construction on the
// time-reversed envelope and flipping the time axis absorbs it again.  The
// packet needs delay = arc_fraction * (2 pi / spacing) to reach the catcher,
// independent of how the boundary length is normalized.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd gaussian_envelope(double t_center, double sigma,
                                         double t0, double dt, int n) {
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) {
    const double t = t0 + dt * i;
    f(i) = std::exp(-std::pow(t - t_center, 2) / (4.0 * sigma * sigma));
  }
  return f;
}

inline Eigen::VectorXd exponential_envelope(double eta, double t0, double dt,
                                            int n) {
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) f(i) = std::exp(-0.5 * eta * (t0 + dt * i));
  return f;
}

inline Pulse shape_emission(const Eigen::VectorXd& f, double t0, double dt,
                            double v_loc, double g_max, double eps_res) {
  const int n = static_cast<int>(f.size());
  if (n < 2) throw input_error("envelope needs at least two samples");
  if (!(dt > 0) || !(v_loc > 0))
    throw input_error("envelope grid and emission rate must be positive");
  if (f.minCoeff() < 0) throw input_error("envelope must be non-negative");
  Eigen::VectorXd f2 = f.array().square();
  double total = 0.0;
  for (int i = 0; i + 1 < n; ++i) total += 0.5 * (f2(i) + f2(i + 1)) * dt;
  if (!(total > 0)) throw input_error("envelope carries no weight");
  f2 /= total;
  Pulse p;
  p.t0 = t0;
  p.dt = dt;
  p.g = Eigen::VectorXd::Zero(n);
  std::vector<double> rem(n);
  rem[n - 1] = 0.0;
  for (int i = n - 2; i >= 0; --i)
    rem[i] = rem[i + 1] + 0.5 * (f2(i) + f2(i + 1)) * dt;
  for (int i = 0; i < n; ++i) {
    if (rem[i] < eps_res) break;  // truncate once the envelope is spent
    double g = std::sqrt(v_loc * f2(i) / rem[i]);
    if (g_max > 0 && g > g_max) {
      g = g_max;
      p.capped = true;
    }
    p.g(i) = g;
  }
  return p;
}

inline Pulse shape_retrieval(const Eigen::VectorXd& f, double t0, double dt,
                             double v_loc, double g_max, double eps_res,
                             double delay) {
  Pulse rev = shape_emission(f.reverse(), t0, dt, v_loc, g_max, eps_res);
  Pulse out;
  out.t0 = t0 + delay;
  out.dt = dt;
  out.capped = rev.capped;
  out.g = rev.g.reverse();
  return out;
}

struct WavepacketOptions {
  double sigma = 10.0;      // emission envelope width
  double pad = 5.0;         // envelope centered at pad * sigma
  double g_max = -1.0;      // coupling cap; <=0: uncapped shaped release
  double eps_res = 1e-4;    // envelope truncation threshold
  double bulk_gap = 0.0;    // required: edge-band ceiling reference
  double band_margin = 0.9;
  int mode = -1;            // carrier mode; <0 selects automatically
  double dt_grid = -1.0;    // <0: sigma / 50
  double weight_min = 1e-3;
};

struct WavepacketPlan {
  int mode = -1;
  double eps_mode = 0.0;   // run the registers at delta_s = eps_mode
  double spacing = 0.0;    // local edge-mode spacing
  double bandwidth = 0.0;  // envelope energy width 1/(2 sigma)
  double branch_width = 0.0;
  double v_loc_a = 0.0, v_loc_b = 0.0;
  int walk = -1;
  int dir = 0;             // walk-index direction of chiral motion
  double arc_fraction = 0.0;
  double delay = 0.0;
  double t_emit_end = 0.0;
  double t_total = 0.0;
  double g_max = 0.0;
  double stark_l = 0.0, stark_r = 0.0;  // g^2 splitting compensation
  double carrier_shift = 0.0;  // flux-weighted mean of the cancelled shift
  Pulse emit_l, recv_r;
};

inline WavepacketPlan plan_wavepacket(const Lattice& lat,
                                      ModeBasis& basis,
                                      const RegisterSetup& setup,
                                      const WavepacketOptions& opts = {}) {
  if (!(opts.sigma > 0)) throw input_error("envelope width must be positive");
  // The plan itself chooses delta_s, so only the sites need validating here.
  {
    RegisterSetup probe = setup;
    probe.delta_s = 1.0;
    probe.g_l = probe.g_r = 0.0;
    validate_registers(lat, probe);
  }
  // Rotate degenerate clusters so the emitter couples to single modes (this
  // reorganizes the two interleaved boundary combs of a cylinder into the
  // emitter's own comb plus weightless partners), then keep only sub-gap
  // modes with weight at the emitter.  The rotation is why the basis is
  // taken mutably: evolution must run in the same basis the plan indexes.
  concentrate_mode_weight(basis, setup.site_a);
  std::vector<int> edge;
  for (int k :
       edge_mode_indices(basis.eps, opts.bulk_gap, opts.band_margin))
    if (std::abs(basis.Q(k, setup.site_a)) >= opts.weight_min) edge.push_back(k);
  if (edge.size() < 5)
    throw input_error("edge spectrum too sparse for wavepacket transfer");

  WavepacketPlan plan;
  plan.branch_width = basis.eps(edge.back()) - basis.eps(edge.front());

  // Carrier selection.  Emission is cleanest low in the branch, where the
  // chiral dispersion is most linear and the drive-induced distortion of the
  // released tail is smallest; the floor is set by the packet's spectral
  // tail, which must clear the band crossing (4 bandwidths leaves e^-4 in
  // amplitude at zero energy).
  if (opts.mode >= 0) {
    if (std::find(edge.begin(), edge.end(), opts.mode) == edge.end())
      throw input_error("requested carrier is not an edge mode");
    plan.mode = opts.mode;
  } else {
    const double lo = basis.eps(edge.front());
    const double mid = lo + 0.5 * plan.branch_width;
    const double spacing_est =
        plan.branch_width / static_cast<double>(edge.size() - 1);
    const double target =
        std::min(std::max(2.0 / opts.sigma, lo + 2.0 * spacing_est), mid);
    const double window =
        std::max(2.0 * spacing_est, plan.branch_width / 12.0);
    // Within the window, weight is only a viability floor (a weak mode makes
    // retrieval slow); among viable modes take the one nearest the target.
    double peak_w = 0.0;
    for (int k : edge) {
      if (std::abs(basis.eps(k) - target) > window) continue;
      peak_w = std::max(peak_w,
                        std::min(std::abs(basis.Q(k, setup.site_a)),
                                 std::abs(basis.Q(k, setup.site_b))));
    }
    double best_d = std::numeric_limits<double>::infinity();
    for (int k : edge) {
      const double d = std::abs(basis.eps(k) - target);
      if (d > window) continue;
      const double w = std::min(std::abs(basis.Q(k, setup.site_a)),
                                std::abs(basis.Q(k, setup.site_b)));
      if (w < 0.7 * peak_w) continue;
      if (d < best_d) {
        best_d = d;
        plan.mode = k;
      }
    }
    if (plan.mode < 0) {
      for (int k : edge) {
        const double d = std::abs(basis.eps(k) - target);
        if (d < best_d) {
          best_d = d;
          plan.mode = k;
        }
      }
    }
  }
  plan.eps_mode = basis.eps(plan.mode);

  // Local spacing from the edge-set neighbors of the carrier.
  {
    auto it = std::find(edge.begin(), edge.end(), plan.mode);
    double acc = 0.0;
    int cnt = 0;
    if (it != edge.begin()) {
      acc += plan.eps_mode - basis.eps(*(it - 1));
      ++cnt;
    }
    if (it + 1 != edge.end()) {
      acc += basis.eps(*(it + 1)) - plan.eps_mode;
      ++cnt;
    }
    if (cnt == 0) throw input_error("carrier mode has no edge neighbors");
    plan.spacing = acc / cnt;
  }
  plan.bandwidth = 1.0 / (2.0 * opts.sigma);

  const double wa = std::abs(basis.Q(plan.mode, setup.site_a));
  const double wb = std::abs(basis.Q(plan.mode, setup.site_b));
  if (wa < opts.weight_min || wb < opts.weight_min)
    throw input_error(
        "carrier mode has negligible weight at a register site; pick another "
        "mode or move the register");
  plan.v_loc_a = plan.spacing / (M_PI * wa * wa);
  plan.v_loc_b = plan.spacing / (M_PI * wb * wb);

  plan.walk = dangling_walk_of(lat, setup.site_a);
  if (dangling_walk_of(lat, setup.site_b) != plan.walk)
    throw input_error("registers must couple to the same boundary");
  plan.dir = probe_edge_direction(lat, basis, setup.site_a, edge, plan.mode,
                                  plan.spacing);
  {
    detail::WalkGeometry wg = detail::walk_geometry(lat, plan.walk);
    const int pa = wg.pos_of_site[setup.site_a];
    const int pb = wg.pos_of_site[setup.site_b];
    if (pa < 0 || pb < 0)
      throw numeric_error("register sites missing from their walk");
    const double fwd =
        detail::wrap_arc(wg.cum[pb] - wg.cum[pa], wg.perimeter);
    const double down = plan.dir > 0 ? fwd : wg.perimeter - fwd;
    plan.arc_fraction = down / wg.perimeter;
  }
  plan.delay = plan.arc_fraction * 2.0 * M_PI / plan.spacing;

  // The shaped release must outrun the envelope tail, so it is uncapped by
  // default; a positive cap is honored and flagged on the pulses.
  plan.g_max = opts.g_max > 0 ? opts.g_max : 0.0;
  const double dt = opts.dt_grid > 0 ? opts.dt_grid : opts.sigma / 50.0;
  const double t_center = opts.pad * opts.sigma;
  const int n = static_cast<int>(std::round(2.0 * t_center / dt)) + 1;
  Eigen::VectorXd f = gaussian_envelope(t_center, opts.sigma, 0.0, dt, n);
  plan.emit_l =
      shape_emission(f, 0.0, dt, plan.v_loc_a, plan.g_max, opts.eps_res);
  plan.recv_r = shape_retrieval(f, 0.0, dt, plan.v_loc_b, plan.g_max,
                                opts.eps_res, plan.delay);
  plan.t_emit_end = 2.0 * t_center;
  plan.t_total = plan.delay + plan.t_emit_end;

  // Second-order register shift: level repulsion from the counter-rotating
  // partners and from modes outside the packet band drags a driven register
  // by lambda*g(t)^2, which would chirp the emitted packet off the carrier.
  // Cancel it dynamically with the stark coefficients (splitting follows
  // delta_s - lambda*g(t)^2, so the effective level stays at eps_mode).
  {
    const double cut = std::max(3.0 * plan.bandwidth, 2.0 * plan.spacing);
    auto lambda_at = [&](int site) {
      double lam = 0.0;
      for (int k = 0; k < basis.eps.size(); ++k) {
        const double q2 = 0.5 * std::norm(basis.Q(k, site));
        const double de = plan.eps_mode - basis.eps(k);
        if (std::abs(de) > cut) lam += q2 / de;
        lam += q2 / (plan.eps_mode + basis.eps(k));
      }
      return lam;
    };
    plan.stark_l = -lambda_at(setup.site_a);
    plan.stark_r = -lambda_at(setup.site_b);
    double num = 0.0, den = 0.0;
    const int ng = static_cast<int>(std::min<Eigen::Index>(
        f.size(), plan.emit_l.g.size()));
    for (int i = 0; i < ng; ++i) {
      const double g = plan.emit_l.g(i);
      num += f(i) * f(i) * g * g;
      den += f(i) * f(i);
    }
    // Flux-weighted mean of the cancelled shift, kept for reporting.
    plan.carrier_shift = -plan.stark_l * (den > 0 ? num / den : 0.0);
  }
  return plan;
}

inline RegisterSetup with_carrier(RegisterSetup s, const WavepacketPlan& p) {
  s.delta_s = p.eps_mode;
  s.g_l = 0.0;
  s.g_r = 0.0;
  s.stark_l = p.stark_l;
  s.stark_r = p.stark_r;
  return s;
}

// Shape comparison between a probed amplitude and a reference envelope.
// Both profiles are unit-normalized over the window and the envelope is slid
// over a shift grid (refined by golden section) before the mismatch is taken:
// packet shape and arrival time are separate claims, and on a discrete comb
// the peak of a narrow-band packet can lag its group-delay estimate.
struct PacketFit {
  double rel_l2 = 0.0;  // best-aligned L2 distance of unit-normalized shapes
  double shift = 0.0;   // fitted offset of the probe signal vs. the reference
};

template <typename Envelope>
inline PacketFit packet_profile_error(const TransferTrace& tr,
                                      Envelope&& f, double t_ref,
                                      double half_window, double max_shift) {
  const int n = static_cast<int>(tr.t.size());
  std::vector<double> ts, av;
  for (int i = 0; i < n; ++i) {
    if (std::abs(tr.t(i) - t_ref) > half_window) continue;
    ts.push_back(tr.t(i));
    av.push_back(std::abs(tr.probe_amp(i)));
  }
  if (ts.size() < 8) throw input_error("probe window too short for a fit");
  double na = 0.0;
  for (double x : av) na += x * x;
  na = std::sqrt(na);
  if (!(na > 0)) throw numeric_error("no probe signal in the fit window");
  auto mismatch = [&](double shift) {
    double nf = 0.0;
    std::vector<double> fv(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      fv[i] = std::abs(f(ts[i] - shift));
      nf += fv[i] * fv[i];
    }
    nf = std::sqrt(nf);
    if (!(nf > 0)) return 2.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i)
      d2 += std::pow(av[i] / na - fv[i] / nf, 2);
    return std::sqrt(d2);
  };
  const int grid = 201;
  double best_s = 0.0, best_v = mismatch(0.0);
  for (int i = 0; i < grid; ++i) {
    const double s = -max_shift + 2.0 * max_shift * i / (grid - 1);
    const double v = mismatch(s);
    if (v < best_v) {
      best_v = v;
      best_s = s;
    }
  }
  // Golden-section refinement around the grid minimum.
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = best_s - 2.0 * max_shift / (grid - 1);
  double b = best_s + 2.0 * max_shift / (grid - 1);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = mismatch(c), fd = mismatch(d);
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = mismatch(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = mismatch(d);
    }
  }
  PacketFit out;
  out.shift = 0.5 * (a + b);
  out.rel_l2 = mismatch(out.shift);
  if (best_v < out.rel_l2) {
    out.rel_l2 = best_v;
    out.shift = best_s;
  }
  return out;
}

// Time at which the retrieved amplitude grows fastest: a robust arrival mark.
inline double arrival_time(const TransferTrace& tr) {
  const int n = static_cast<int>(tr.t.size());
  if (n < 2) throw input_error("trace too short for arrival detection");
  int best = 1;
  double best_rate = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < n; ++i) {
    const double rate = (std::norm(tr.amp_r(i)) - std::norm(tr.amp_r(i - 1))) /
                        (tr.t(i) - tr.t(i - 1));
    if (rate > best_rate) {
      best_rate = rate;
      best = i;
    }
  }
  return 0.5 * (tr.t(best) + tr.t(best - 1));
}

// ---------------------------------------------------------------------------
// Trace serialization.
// ---------------------------------------------------------------------------

inline void write_trace_csv(std::ostream& os, const TransferTrace& tr) {
  os << "t,re_amp_L,im_amp_L,re_amp_R,im_amp_R,edge_prob,norm\n";
  for (int i = 0; i < tr.t.size(); ++i) {
    os << fmt_real(tr.t(i)) << ',' << fmt_real(tr.amp_l(i).real()) << ','
       << fmt_real(tr.amp_l(i).imag()) << ',' << fmt_real(tr.amp_r(i).real())
       << ',' << fmt_real(tr.amp_r(i).imag()) << ','
       << fmt_real(tr.edge_prob(i)) << ',' << fmt_real(tr.norm(i)) << '\n';
  }
}

}  // namespace yk
