/*
 * netcomp.hpp
 *
 * Networks of systems: neighbour sets, disturbance alphabets built from
 * neighbour grids, per-node parameter synthesis, and composition of systems
 * and of their finite abstractions.
 */

#ifndef STOCHABS_NETCOMP_HPP_
#define STOCHABS_NETCOMP_HPP_

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "abstraction.hpp"
#include "certify.hpp"
#include "grid.hpp"
#include "system.hpp"

namespace stochabs {

class WiringError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<int> sorted_members(const NetworkSpec &spec, std::vector<int> set) {
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  for (int i : set)
    if (i < 0 || std::size_t(i) >= spec.size()) throw SpecError("unknown node " + std::to_string(i));
  return set;
}

inline std::string join(const std::vector<std::string> &v, const std::string &sep) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? sep : "") + v[k];
  return s;
}

} // namespace detail

/**
 * Nodes j outside `set` with an edge (j, i) into some i in `set`, ascending.
 * These are the neighbours of the set over the relation with the edges
 * internal to the set removed.
 */
inline std::vector<int> neighbors_of_set(const NetworkSpec &spec, const std::vector<int> &set) {
  auto members = detail::sorted_members(spec, set);
  auto inside = [&](int k) { return std::binary_search(members.begin(), members.end(), k); };
  std::vector<int> out;
  for (auto [j, i] : spec.edges)
    if (inside(i) && !inside(j)) out.push_back(j);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Lexicographic product of the listed point sets (first one most significant).
inline PointSet product_points(const std::vector<const PointSet *> &parts, std::uint64_t cap = UINT64_MAX) {
  PointSet out;
  std::uint64_t count = 1;
  for (auto *p : parts) {
    out.dim += p->dim;
    count = detail::checked_product({count, std::uint64_t(p->size())});
  }
  if (count > cap) throw SizeError(count, cap);
  Vec pt(std::size_t(out.dim));
  std::vector<std::size_t> idx(parts.size(), 0);
  for (std::uint64_t c = 0; c < count; ++c) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto q = parts[k]->at(idx[k]);
      std::copy(q.begin(), q.end(), pt.begin() + std::ptrdiff_t(off));
      off += q.size();
    }
    out.push(pt);
    for (std::size_t k = parts.size(); k-- > 0;) {
      if (++idx[k] < parts[k]->size()) break;
      idx[k] = 0;
    }
  }
  return out;
}

/**
 * Disturbance alphabet of node i: the product of its neighbours' state grids
 * (spacing eta[j], restricted to their domains). No neighbours gives the
 * singleton {0}.
 */
inline PointSet build_Wtilde(const NetworkSpec &spec, int i, const std::vector<Vec> &eta,
                             std::uint64_t cap = UINT64_MAX) {
  auto nb = neighbors(spec, i);
  if (nb.empty()) return zero_disturbance(spec.nodes[std::size_t(i)].sys.p);
  std::vector<PointSet> grids;
  grids.reserve(nb.size());
  for (int j : nb) grids.push_back(Grid::state_grid(spec.nodes[std::size_t(j)].sys.domain, eta[std::size_t(j)]).points());
  std::vector<const PointSet *> parts;
  for (auto &g : grids) parts.push_back(&g);
  return product_points(parts, cap);
}

/// Block sizes of node i's disturbance (its neighbours' state dimensions).
inline std::vector<int> disturbance_blocks(const NetworkSpec &spec, int i) {
  std::vector<int> b;
  for (int j : neighbors(spec, i)) b.push_back(spec.nodes[std::size_t(j)].sys.n);
  return b;
}

/**
 * (eps_j) over the neighbours of i. Requires eta_j <= eps_j (per axis) so
 * every neighbour state has a grid symbol within eps_j.
 */
inline Vec eps_tilde(const NetworkSpec &spec, int i, const Vec &eps, const std::vector<Vec> &eta = {}) {
  Vec out;
  for (int j : neighbors(spec, i)) {
    const double ej = eps[std::size_t(j)];
    if (!eta.empty())
      for (double h : eta[std::size_t(j)])
        if (h > ej)
          throw WiringError("node " + spec.nodes[std::size_t(j)].name + " has eta " + expr::format_real(h) +
                            " above its eps " + expr::format_real(ej));
    out.push_back(ej);
  }
  return out;
}

/// Componentwise metric e(a, b) = (||a_1 - b_1||_inf, ..., ||a_k - b_k||_inf) over consecutive blocks.
struct VectorMetric {
  std::vector<int> blocks;

  Vec operator()(std::span<const double> a, std::span<const double> b) const {
    Vec e(blocks.size(), 0.0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      for (int c = 0; c < blocks[k]; ++c, ++off) e[k] = std::max(e[k], std::abs(a[off] - b[off]));
    }
    return e;
  }
  /// e(a, b) <= bound componentwise (with slack).
  bool within(std::span<const double> a, std::span<const double> b, std::span<const double> bound,
              double slack = kGeomSlack) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < blocks.size(); ++k)
      for (int c = 0; c < blocks[k]; ++c, ++off)
        if (std::abs(a[off] - b[off]) > bound[k] + slack) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// parameter synthesis

struct SynthOptions {
  /// Smallest eta accepted as feasible.
  double eta_floor = 1e-6;
  int bisection_steps = 60;
  /// Certificate check samples when the dynamics are not affine.
  std::size_t cert_samples = 10000;
  std::uint64_t seed = 1;
};

struct NodeParams {
  std::string name;
  bool feasible = false;
  std::string reason;
  double eps = 0.0;
  Vec eps_tilde;
  double psi = 0.0;
  double eps_lower = 0.0;
  double omega_scalar = 0.0; // before snapping
  double eta_bound = 0.0;    // at the snapped omega
  Vec eta, omega;            // per axis, snapped
  EtaBoundTerms terms;
};

struct SynthesisResult {
  bool feasible = false;
  std::vector<NodeParams> nodes;
};

/// Verifies the declared certificate exactly for affine dynamics, by sampling otherwise.
inline CertificateReport check_declared_certificate(const SysModel &sys, const QuadraticCertificate &cert,
                                                    std::size_t samples = 10000, std::uint64_t seed = 1) {
  try {
    (void)extract_linear(sys);
    return verify_certificate(sys, cert, VerifyMode::LinearExact);
  } catch (const CertificateError &) {
    return verify_certificate(sys, cert, VerifyMode::Sampled, samples, seed);
  }
}

/**
 * Largest input spacing (searched downward from the input-box width) for
 * which the eta bound stays above the floor, then eta = min(bound, eps)
 * snapped to grids that cover the boxes.
 */
inline NodeParams synthesize_node(const SysModel &sys, double tau, double eps, DisturbanceTerms dt,
                                  const SynthOptions &opt = {}) {
  NodeParams np;
  np.name = sys.name;
  np.eps = eps;
  np.psi = dt.psi_tau;
  if (!sys.cert) {
    np.reason = "no certificate declared";
    return np;
  }
  QuadraticCertificate cert;
  try {
    cert = QuadraticCertificate::from_system(sys);
  } catch (const CertificateError &e) {
    np.reason = e.what();
    return np;
  }
  auto cr = check_declared_certificate(sys, cert, opt.cert_samples, opt.seed);
  if (!cr.accepted) {
    np.reason = "certificate rejected: " + cr.detail;
    return np;
  }
  BoundKit kit = derive_bounds(sys, cert);
  np.eps_lower = eps_lower_bound(kit, sys, tau, dt);
  if (!(eps > np.eps_lower)) {
    np.terms = eta_bound_terms(kit, sys, tau, eps, 0.0, dt);
    np.reason = "eps lower-bound inequality: eps = " + expr::format_real(eps) + " is not above " +
                expr::format_real(np.eps_lower);
    return np;
  }
  auto bound_at = [&](double om) { return eta_upper_bound(kit, sys, tau, eps, om, dt); };
  double wmax = 0.0;
  for (std::size_t k = 0; k < sys.input.dim(); ++k) wmax = std::max(wmax, sys.input.hi[k] - sys.input.lo[k]);
  double om = wmax;
  if (bound_at(om) < opt.eta_floor) {
    if (bound_at(0.0) < opt.eta_floor) {
      np.terms = eta_bound_terms(kit, sys, tau, eps, 0.0, dt);
      np.reason = "eta bound below the floor even with exact inputs; limiting term: " + np.terms.limiting_term();
      return np;
    }
    double lo = 0.0, hi = wmax;
    for (int it = 0; it < opt.bisection_steps; ++it) {
      double mid = 0.5 * (lo + hi);
      (bound_at(mid) >= opt.eta_floor ? lo : hi) = mid;
    }
    om = lo;
  }
  np.omega_scalar = om;
  np.omega.resize(std::size_t(sys.m));
  double om_eff = 0.0;
  for (int k = 0; k < sys.m; ++k) {
    np.omega[std::size_t(k)] = snap_input_spacing(sys.input.lo[std::size_t(k)], sys.input.hi[std::size_t(k)], om);
    om_eff = std::max(om_eff, np.omega[std::size_t(k)]);
  }
  np.terms = eta_bound_terms(kit, sys, tau, eps, om_eff, dt);
  np.eta_bound = np.terms.bound;
  const double target = std::min(np.eta_bound, eps);
  np.eta.resize(std::size_t(sys.n));
  for (int k = 0; k < sys.n; ++k) {
    double e = snap_state_spacing(sys.domain.lo[std::size_t(k)], sys.domain.hi[std::size_t(k)], target);
    if (!(e >= opt.eta_floor)) {
      np.reason = "no covering state grid with spacing at most " + expr::format_real(target) + " on axis " +
                  std::to_string(k + 1);
      return np;
    }
    np.eta[std::size_t(k)] = e;
  }
  np.feasible = true;
  return np;
}

/**
 * Per-node synthesis with eps~ from the neighbours' targets and psi from the
 * neighbours' growth constants. All nodes are evaluated; the network is
 * feasible only if every node is.
 */
inline SynthesisResult synthesize_params(const NetworkSpec &spec, const SynthOptions &opt = {}) {
  SynthesisResult res;
  Vec eps;
  for (const auto &nd : spec.nodes) eps.push_back(nd.eps);
  res.feasible = true;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto &nd = spec.nodes[i];
    DisturbanceTerms dt;
    Vec et = eps_tilde(spec, int(i), eps);
    NodeParams np;
    try {
      dt.psi_tau = compute_psi(spec, int(i), spec.tau);
      dt.eps_tilde_norm = et.empty() ? 0.0 : *std::max_element(et.begin(), et.end());
      np = synthesize_node(nd.sys, spec.tau, nd.eps, dt, opt);
    } catch (const std::exception &e) {
      np.reason = e.what();
    }
    np.name = nd.name;
    np.eps_tilde = et;
    res.feasible = res.feasible && np.feasible;
    res.nodes.push_back(std::move(np));
  }
  return res;
}

// ---------------------------------------------------------------------------
// composition

namespace detail {

inline Expr map_vars(const Expr &e, const std::function<Expr(VarKind, int)> &fn) {
  if (!e) return e;
  switch (e->op) {
  case ExprOp::Num: return e;
  case ExprOp::Var: return fn(e->kind, e->index);
  case ExprOp::Add:
  case ExprOp::Sub:
  case ExprOp::Mul:
  case ExprOp::Div: return expr::binary(e->op, map_vars(e->lhs, fn), map_vars(e->rhs, fn));
  case ExprOp::Pow: return expr::pow(map_vars(e->lhs, fn), e->index);
  default: return expr::unary(e->op, map_vars(e->lhs, fn));
  }
}

inline void append_box(Box &b, const Box &part) {
  b.lo.insert(b.lo.end(), part.lo.begin(), part.lo.end());
  b.hi.insert(b.hi.end(), part.hi.begin(), part.hi.end());
}

} // namespace detail

/**
 * The system of the nodes in `set`: concatenated states and inputs, coupling
 * disturbances replaced by the member states they read, the remaining
 * disturbance made of the external neighbours' states, and block-diagonal
 * diffusion. The Lipschitz constant absorbs the coupling gain; no
 * certificate is carried over.
 */
inline SysModel compose_systems(const NetworkSpec &spec, const std::vector<int> &set) {
  auto members = detail::sorted_members(spec, set);
  auto ext = neighbors_of_set(spec, members);
  const std::size_t N = spec.size();
  std::vector<int> xoff(N, -1), uoff(N, -1), roff(N, -1), eoff(N, -1);
  SysModel c;
  std::vector<std::string> names;
  for (int i : members) {
    const SysModel &s = spec.nodes[std::size_t(i)].sys;
    xoff[std::size_t(i)] = c.n, uoff[std::size_t(i)] = c.m, roff[std::size_t(i)] = c.r;
    c.n += s.n, c.m += s.m, c.r += s.r;
    detail::append_box(c.domain, s.domain);
    detail::append_box(c.input, s.input);
    names.push_back(spec.nodes[std::size_t(i)].name);
  }
  for (int j : ext) {
    eoff[std::size_t(j)] = c.p;
    c.p += spec.nodes[std::size_t(j)].sys.n;
    detail::append_box(c.dist, spec.nodes[std::size_t(j)].sys.domain);
  }
  c.name = detail::join(names, "+");
  c.drift.assign(std::size_t(c.n), nullptr);
  c.diffusion.assign(std::size_t(c.n * c.r), nullptr);
  double lu = 0.0, lw = 0.0;
  for (int i : members) {
    const SysModel &s = spec.nodes[std::size_t(i)].sys;
    // w index -> (source node, component)
    std::vector<std::pair<int, int>> wsrc;
    for (int j : neighbors(spec, i))
      for (int k = 0; k < spec.nodes[std::size_t(j)].sys.n; ++k) wsrc.emplace_back(j, k);
    auto fn = [&](VarKind kind, int idx) -> Expr {
      switch (kind) {
      case VarKind::State: return expr::var(VarKind::State, xoff[std::size_t(i)] + idx);
      case VarKind::Input: return expr::var(VarKind::Input, uoff[std::size_t(i)] + idx);
      case VarKind::Disturbance: {
        auto [j, k] = wsrc.at(std::size_t(idx));
        if (xoff[std::size_t(j)] >= 0) return expr::var(VarKind::State, xoff[std::size_t(j)] + k);
        return expr::var(VarKind::Disturbance, eoff[std::size_t(j)] + k);
      }
      }
      return nullptr;
    };
    for (int a = 0; a < s.n; ++a) {
      c.drift[std::size_t(xoff[std::size_t(i)] + a)] = detail::map_vars(s.drift[std::size_t(a)], fn);
      for (int k = 0; k < s.r; ++k)
        c.diffusion[std::size_t((xoff[std::size_t(i)] + a) * c.r + roff[std::size_t(i)] + k)] =
            detail::map_vars(s.diffusion[std::size_t(a * s.r + k)], fn);
    }
    c.Lf = std::max(c.Lf, s.Lf + s.Lw());
    c.Lsigma = std::max(c.Lsigma, s.Lsigma);
    c.K = std::max(c.K, s.K);
    lu = std::max(lu, s.Lu());
    lw = std::max(lw, s.Lw());
  }
  c.Lu_override = lu;
  c.Lw_override = lw;
  c.compile();
  return c;
}

/**
 * The network with the nodes of `set` merged into one node (placed at the
 * first member's position). Fails if an outside node reads only part of the
 * merged state.
 */
inline NetworkSpec quotient_network(const NetworkSpec &spec, const std::vector<int> &set) {
  auto members = detail::sorted_members(spec, set);
  if (members.empty()) return spec;
  auto inside = [&](int k) { return std::binary_search(members.begin(), members.end(), k); };
  NetworkSpec q;
  q.tau = spec.tau;
  std::vector<int> remap(spec.size(), -1);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (inside(int(k))) {
      if (int(k) == members.front()) {
        NetworkNode nd;
        nd.sys = compose_systems(spec, members);
        nd.name = nd.sys.name;
        for (int i : members) nd.eps = std::max(nd.eps, spec.nodes[std::size_t(i)].eps);
        q.nodes.push_back(std::move(nd));
      }
      remap[k] = int(q.nodes.size()) - 1;
      if (int(k) != members.front()) remap[k] = remap[std::size_t(members.front())];
    } else {
      q.nodes.push_back(spec.nodes[k]);
      remap[k] = int(q.nodes.size()) - 1;
    }
  }
  for (auto [j, i] : spec.edges) {
    int a = remap[std::size_t(j)], b = remap[std::size_t(i)];
    if (a != b) q.edges.emplace_back(a, b);
  }
  std::sort(q.edges.begin(), q.edges.end());
  q.edges.erase(std::unique(q.edges.begin(), q.edges.end()), q.edges.end());
  wire_network(q);
  return q;
}

/// Composite accuracy: eps = max over the set, eps~ = the external neighbours' eps.
struct ComposedParams {
  double eps = 0.0;
  Vec eps_tilde;
};

inline ComposedParams composed_relation_params(const Vec &eps, const NetworkSpec &spec, const std::vector<int> &set) {
  ComposedParams cp;
  for (int i : detail::sorted_members(spec, set)) cp.eps = std::max(cp.eps, eps[std::size_t(i)]);
  for (int j : neighbors_of_set(spec, set)) cp.eps_tilde.push_back(eps[std::size_t(j)]);
  return cp;
}

/**
 * Product of the member abstractions. A member's disturbance symbol is
 * assembled from the current product state for neighbours inside the set and
 * from the composed disturbance symbol for external neighbours; successors
 * are the products of the member successor lists. `abs` holds one
 * abstraction per network node (external neighbours supply their state
 * alphabets).
 */
inline FiniteAbstraction compose_abstractions(const std::vector<FiniteAbstraction> &abs, const NetworkSpec &spec,
                                              const std::vector<int> &set, std::uint64_t max_cells = 50'000'000,
                                              unsigned workers = 1) {
  if (abs.size() != spec.size()) throw WiringError("need one abstraction per network node");
  auto members = detail::sorted_members(spec, set);
  if (members.empty()) throw WiringError("empty node set");
  auto ext = neighbors_of_set(spec, members);
  const std::size_t N = spec.size();

  // check that each member's disturbance alphabet is the product of its neighbours' state sets
  std::vector<std::vector<int>> nbs(N);
  for (int i : members) {
    nbs[std::size_t(i)] = neighbors(spec, i);
    const auto &ai = abs[std::size_t(i)];
    if (nbs[std::size_t(i)].empty()) {
      if (ai.n_dists() != 1)
        throw WiringError("node " + spec.nodes[std::size_t(i)].name + " has no neighbours but several disturbance symbols");
      continue;
    }
    std::vector<const PointSet *> parts;
    for (int j : nbs[std::size_t(i)]) parts.push_back(&abs[std::size_t(j)].states);
    if (!(product_points(parts, max_cells) == ai.dists))
      throw WiringError("disturbance symbols of node " + spec.nodes[std::size_t(i)].name +
                        " are not the product of its neighbours' abstract states");
    if (ai.tau != abs[std::size_t(members.front())].tau) throw WiringError("members disagree on tau");
  }

  FiniteAbstraction c;
  std::vector<std::string> names, enames;
  std::vector<const PointSet *> sparts, iparts, eparts;
  for (int i : members) {
    const auto &ai = abs[std::size_t(i)];
    names.push_back(spec.nodes[std::size_t(i)].name);
    sparts.push_back(&ai.states);
    iparts.push_back(&ai.inputs);
    c.eta.insert(c.eta.end(), ai.eta.begin(), ai.eta.end());
    c.omega.insert(c.omega.end(), ai.omega.begin(), ai.omega.end());
    c.eps = std::max(c.eps, ai.eps);
  }
  for (int j : ext) {
    const auto &aj = abs[std::size_t(j)];
    enames.push_back(spec.nodes[std::size_t(j)].name);
    eparts.push_back(&aj.states);
    c.eps_tilde.push_back(aj.eps);
    c.blocks.push_back(aj.states.dim);
  }
  c.system = detail::join(names, "+");
  c.composed = CompositionInfo{names, enames};
  c.tau = abs[std::size_t(members.front())].tau;

  std::uint64_t ns = 1, ni = 1, ne = 1;
  for (int i : members) {
    ns = detail::checked_product({ns, abs[std::size_t(i)].n_states()});
    ni = detail::checked_product({ni, abs[std::size_t(i)].n_inputs()});
  }
  for (int j : ext) ne = detail::checked_product({ne, abs[std::size_t(j)].n_states()});
  const std::uint64_t cells = detail::checked_product({ns, ni, ne});
  if (cells > max_cells) throw SizeError(cells, max_cells);

  c.states = product_points(sparts);
  c.inputs = product_points(iparts);
  c.dists = product_points(eparts);
  c.transitions.resize(cells);

  const std::size_t M = members.size(), E = ext.size();
  std::vector<int> epos(N, -1), mpos(N, -1);
  for (std::size_t k = 0; k < E; ++k) epos[std::size_t(ext[k])] = int(k);
  for (std::size_t k = 0; k < M; ++k) mpos[std::size_t(members[k])] = int(k);

  auto unrank = [](std::uint64_t v, const std::vector<std::size_t> &radix, std::vector<std::size_t> &out) {
    for (std::size_t k = radix.size(); k-- > 0;) {
      out[k] = v % radix[k];
      v /= radix[k];
    }
  };
  std::vector<std::size_t> srad(M), irad(M), erad(E);
  for (std::size_t k = 0; k < M; ++k) {
    srad[k] = abs[std::size_t(members[k])].n_states();
    irad[k] = abs[std::size_t(members[k])].n_inputs();
  }
  for (std::size_t k = 0; k < E; ++k) erad[k] = abs[std::size_t(ext[k])].n_states();

  parallel_for(std::size_t(cells), workers, [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> s(M), in(M), d(E);
    std::vector<const Transition *> parts(M);
    for (std::size_t k = b; k < e; ++k) {
      std::uint64_t S = k / (ni * ne), I = (k / ne) % ni, D = k % ne;
      unrank(S, srad, s);
      unrank(I, irad, in);
      unrank(D, erad, d);
      Transition &t = c.transitions[k];
      t.state = std::uint32_t(S);
      t.input = std::uint32_t(I);
      t.dist = std::uint32_t(D);
      for (std::size_t m = 0; m < M; ++m) {
        int i = members[m];
        std::size_t di = 0;
        for (int j : nbs[std::size_t(i)]) {
          std::size_t sym = mpos[std::size_t(j)] >= 0 ? s[std::size_t(mpos[std::size_t(j)])] : d[std::size_t(epos[std::size_t(j)])];
          di = di * abs[std::size_t(j)].n_states() + sym;
        }
        parts[m] = &abs[std::size_t(i)].at(s[m], in[m], di);
        t.out_of_domain = t.out_of_domain || parts[m]->out_of_domain;
      }
      // product of successor lists, lexicographic
      std::vector<std::size_t> pos(M, 0);
      bool empty = false;
      for (auto *p : parts) empty = empty || p->succ.empty();
      if (empty) continue;
      for (bool more = true; more;) {
        std::uint64_t idx = 0;
        for (std::size_t m = 0; m < M; ++m) idx = idx * srad[m] + parts[m]->succ[pos[m]];
        t.succ.push_back(std::uint32_t(idx));
        more = false;
        for (std::size_t m = M; m-- > 0;) {
          if (++pos[m] < parts[m]->succ.size()) {
            more = true;
            break;
          }
          pos[m] = 0;
        }
      }
    }
  });
  seal(c);
  return c;
}

} // namespace stochabs

#endif /* STOCHABS_NETCOMP_HPP_ */
