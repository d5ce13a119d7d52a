/*
 * mcvalidate.hpp
 *
 * Seeded Euler-Maruyama ensembles and Monte-Carlo checks of the moment
 * inequalities: closeness to the nominal flow, increment growth, incremental
 * stability, and one abstraction step of the relation.
 */

#ifndef STOCHABS_MCVALIDATE_HPP_
#define STOCHABS_MCVALIDATE_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "abstraction.hpp"
#include "certify.hpp"
#include "flow.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "system.hpp"

namespace stochabs {

/// Default seed for every randomized routine.
inline constexpr std::uint64_t kDefaultSeed = 20240917;

/// Independent stream for one path, derived from (master seed, path index) only.
inline std::mt19937_64 path_rng(std::uint64_t master, std::uint64_t path) {
  std::seed_seq sq{std::uint32_t(master), std::uint32_t(master >> 32), std::uint32_t(path), std::uint32_t(path >> 32)};
  return std::mt19937_64(sq);
}

/// Piecewise signal on [0, tau]; constant unless `fn` is set.
struct Signal {
  Vec value;
  std::function<Vec(double)> fn;

  Signal() = default;
  Signal(Vec v) : value(std::move(v)) {}
  Signal(std::function<Vec(double)> f) : fn(std::move(f)) {}
  bool constant() const { return !fn; }
};

struct EMPath {
  Vec states; // (steps + 1) x n, row-major
  int n = 0;
  bool diverged = false;
  int diverged_at = -1;

  std::span<const double> at(std::size_t k) const { return {states.data() + k * std::size_t(n), std::size_t(n)}; }
};

/**
 * @brief Euler-Maruyama stepper with preallocated buffers.
 *
 * x_{k+1} = x_k + f(x_k, u_k, w_k) dt + sigma(x_k) sqrt(dt) z_k.
 */
class EulerMaruyama {
public:
  EulerMaruyama(const SysModel &sys, double dt) : sys_(sys), dt_(dt), sq_(std::sqrt(dt)) {
    f_.resize(std::size_t(sys.n));
    s_.resize(std::size_t(sys.n * sys.r));
    z_.resize(std::size_t(sys.r));
  }

  /// One step with the given standard normal vector (size r).
  void step_with(std::span<double> x, std::span<const double> u, std::span<const double> w, std::span<const double> z) {
    sys_.eval_drift(x, u, w, f_);
    if (sys_.r > 0) sys_.eval_diffusion(x, s_);
    const int n = sys_.n, r = sys_.r;
    for (int i = 0; i < n; ++i) {
      double noise = 0.0;
      for (int k = 0; k < r; ++k) noise += s_[std::size_t(i * r + k)] * z[std::size_t(k)];
      x[std::size_t(i)] += f_[std::size_t(i)] * dt_ + noise * sq_;
    }
  }

  template <class Rng> void step(std::span<double> x, std::span<const double> u, std::span<const double> w, Rng &rng) {
    for (auto &v : z_) v = normal_(rng);
    step_with(x, u, w, z_);
  }

  double dt() const { return dt_; }

private:
  const SysModel &sys_;
  double dt_, sq_;
  Vec f_, s_, z_;
  std::normal_distribution<double> normal_;
};

/// Full path of `steps` Euler-Maruyama steps over [0, tau].
inline EMPath simulate_em(const SysModel &sys, std::span<const double> x0, const Signal &u, const Signal &w,
                          double tau, int steps, std::uint64_t seed, std::uint64_t path_index = 0) {
  if (steps < 1) throw std::invalid_argument("steps must be at least 1");
  EMPath p;
  p.n = sys.n;
  p.states.reserve(std::size_t(steps + 1) * std::size_t(sys.n));
  p.states.insert(p.states.end(), x0.begin(), x0.end());
  const double dt = tau / steps;
  EulerMaruyama em(sys, dt);
  auto rng = path_rng(seed, path_index);
  Vec x(x0.begin(), x0.end());
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    Vec uu = u.constant() ? u.value : u.fn(t);
    Vec ww = w.constant() ? w.value : w.fn(t);
    em.step(x, uu, ww, rng);
    for (double v : x)
      if (!std::isfinite(v)) {
        p.diverged = true;
        p.diverged_at = k + 1;
        return p;
      }
    p.states.insert(p.states.end(), x.begin(), x.end());
  }
  return p;
}

/// Euler-Maruyama driven by given Brownian increments dW (steps x r).
inline Vec simulate_em_increments(const SysModel &sys, std::span<const double> x0, std::span<const double> u,
                                  std::span<const double> w, double tau, int steps, std::span<const double> dW) {
  const double dt = tau / steps;
  EulerMaruyama em(sys, dt);
  Vec x(x0.begin(), x0.end()), z(std::size_t(sys.r));
  const double inv = 1.0 / std::sqrt(dt);
  for (int k = 0; k < steps; ++k) {
    for (int j = 0; j < sys.r; ++j) z[std::size_t(j)] = dW[std::size_t(k * sys.r + j)] * inv;
    em.step_with(x, u, w, z);
  }
  return x;
}

struct MCOptions {
  std::size_t paths = 10000;
  std::uint64_t seed = kDefaultSeed;
  int steps = 2048; // per tau
  unsigned workers = 1;
};

/**
 * @brief States of N paths at selected step indices.
 *
 * Path k uses path_rng(seed, k), so any path can be replayed alone.
 */
struct PathEnsemble {
  std::uint64_t seed = 0;
  std::size_t paths = 0;
  double dt = 0.0;
  std::vector<int> checkpoints; // step indices
  int n = 0;
  Vec values; // paths x checkpoints x n
  std::vector<char> diverged;

  std::span<const double> at(std::size_t path, std::size_t cp) const {
    return {values.data() + (path * checkpoints.size() + cp) * std::size_t(n), std::size_t(n)};
  }
  std::size_t diverged_count() const { return std::size_t(std::count(diverged.begin(), diverged.end(), 1)); }
};

/**
 * Runs `paths` constant-signal paths of `steps` steps each, recording the
 * listed step indices. Several systems can share one stream per path (the
 * same Brownian increments) by passing several starting states.
 */
inline std::vector<PathEnsemble> run_coupled_ensembles(const SysModel &sys, const std::vector<Vec> &x0,
                                                       const std::vector<Vec> &u, const std::vector<Vec> &w,
                                                       double tau, int steps, const std::vector<int> &checkpoints,
                                                       const MCOptions &opt) {
  const std::size_t C = x0.size();
  std::vector<PathEnsemble> out(C);
  for (auto &e : out) {
    e.seed = opt.seed;
    e.paths = opt.paths;
    e.dt = tau / steps;
    e.checkpoints = checkpoints;
    e.n = sys.n;
    e.values.assign(opt.paths * checkpoints.size() * std::size_t(sys.n), 0.0);
    e.diverged.assign(opt.paths, 0);
  }
  parallel_for(opt.paths, opt.workers, [&](std::size_t b, std::size_t e) {
    EulerMaruyama em(sys, tau / steps);
    std::normal_distribution<double> normal;
    Vec z(std::size_t(sys.r));
    std::vector<Vec> x(C);
    for (std::size_t p = b; p < e; ++p) {
      auto rng = path_rng(opt.seed, p);
      normal.reset();
      for (std::size_t c = 0; c < C; ++c) x[c] = x0[c];
      std::vector<char> bad(C, 0);
      std::size_t cp = 0;
      auto record = [&](int k) {
        while (cp < checkpoints.size() && checkpoints[cp] == k) {
          for (std::size_t c = 0; c < C; ++c)
            std::copy(x[c].begin(), x[c].end(), out[c].values.begin() + std::ptrdiff_t((p * checkpoints.size() + cp) * std::size_t(sys.n)));
          ++cp;
        }
      };
      record(0);
      for (int k = 0; k < steps; ++k) {
        for (auto &v : z) v = normal(rng);
        for (std::size_t c = 0; c < C; ++c) {
          if (bad[c]) continue;
          em.step_with(x[c], u[c], w[c], z);
          for (double v : x[c])
            if (!std::isfinite(v)) bad[c] = 1;
        }
        record(k + 1);
      }
      for (std::size_t c = 0; c < C; ++c) out[c].diverged[p] = bad[c];
    }
  });
  return out;
}

inline PathEnsemble run_ensemble(const SysModel &sys, const Vec &x0, const Vec &u, const Vec &w, double tau, int steps,
                                 const std::vector<int> &checkpoints, const MCOptions &opt) {
  return std::move(run_coupled_ensembles(sys, {x0}, {u}, {w}, tau, steps, checkpoints, opt)[0]);
}

// ---------------------------------------------------------------------------
// reports

struct BoundRow {
  std::string check;
  std::string when; // "t" or "s;t"
  double empirical = 0.0;
  double std_error = 0.0;
  double bound = 0.0;
  double slack = 0.0; // deterministic allowance (integration error), 0 for most checks
  bool pass = false;
};

struct BoundReport {
  std::string name;
  std::vector<BoundRow> rows;
  std::size_t paths = 0;
  std::size_t diverged = 0;
  std::size_t skipped = 0;
  std::string note;

  bool diverged_ok() const { return double(diverged) <= 0.01 * double(paths); }
  bool pass() const {
    if (!diverged_ok()) return false;
    for (const auto &r : rows)
      if (!r.pass) return false;
    return true;
  }
};

inline const char *kCsvHeader = "check,t,empirical,std_error,bound,slack,verdict";

inline void write_csv_rows(std::ostream &os, const BoundReport &rep) {
  for (const auto &r : rep.rows)
    os << r.check << ',' << r.when << ',' << expr::format_real(r.empirical) << ',' << expr::format_real(r.std_error)
       << ',' << expr::format_real(r.bound) << ',' << expr::format_real(r.slack) << ',' << (r.pass ? "pass" : "fail")
       << '\n';
}

inline void write_csv(std::ostream &os, const std::vector<BoundReport> &reps) {
  os << kCsvHeader << '\n';
  for (const auto &r : reps) write_csv_rows(os, r);
}

namespace detail {

struct MeanSE {
  double mean = 0.0, se = 0.0;
  std::size_t count = 0;
};

/// Sample mean and standard error in index order, skipping masked entries.
inline MeanSE mean_se(const Vec &v, const std::vector<char> &skip) {
  MeanSE m;
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!skip[k]) s += v[k], ++m.count;
  if (m.count == 0) return m;
  m.mean = s / double(m.count);
  double q = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (!skip[k]) q += (v[k] - m.mean) * (v[k] - m.mean);
  m.se = m.count > 1 ? std::sqrt(q / double(m.count - 1) / double(m.count)) : 0.0;
  return m;
}

inline std::string fmt_time(double t) { return expr::format_real(t); }

inline int steps_at(double t, double tau, int steps) { return int(std::llround(t / tau * steps)); }

inline void need_divisible(int steps, int by) {
  if (steps % by != 0) throw std::invalid_argument("steps must be a multiple of " + std::to_string(by));
}

} // namespace detail

/**
 * E ||xi(t) - xi_bar(t)||_inf^2 against h(t) at t in {tau/4, tau/2, tau},
 * with constant (u, w). The deterministic allowance per checkpoint is the
 * gap between the explicit-Euler and RK4 nominal paths; a row passes iff
 * sqrt(empirical) <= sqrt(h + 3 SE) + allowance.
 */
inline BoundReport validate_moment_closeness(const SysModel &sys, const BoundKit &kit, const Vec &x0, const Vec &u,
                                             const Vec &w, double tau, const MCOptions &opt) {
  detail::need_divisible(opt.steps, 4);
  const std::vector<double> ts = {tau / 4, tau / 2, tau};
  std::vector<int> cps;
  for (double t : ts) cps.push_back(detail::steps_at(t, tau, opt.steps));
  auto ens = run_ensemble(sys, x0, u, w, tau, opt.steps, cps, opt);

  BoundReport rep;
  rep.name = "moment_closeness";
  rep.paths = opt.paths;
  rep.diverged = ens.diverged_count();
  // nominal references: RK4 truth and explicit Euler at the same step
  Vec euler = x0;
  {
    EulerMaruyama e(sys, tau / opt.steps);
    Vec z0(std::size_t(sys.r), 0.0);
    std::size_t cp = 0;
    std::vector<Vec> eu(ts.size());
    for (int k = 1; k <= opt.steps; ++k) {
      e.step_with(euler, u, w, z0);
      if (cp < cps.size() && cps[cp] == k) eu[cp++] = euler;
    }
    for (std::size_t c = 0; c < ts.size(); ++c) {
      FlowOptions fo;
      fo.substeps = 64;
      fo.tolerance = 1e-12;
      fo.max_substeps = 1 << 20;
      fo.inflate = 1e9;
      Vec ref = flow_nominal(sys, x0, u, w, ts[c], fo).x;
      Vec d(opt.paths);
      for (std::size_t p = 0; p < opt.paths; ++p) {
        double v = inf_dist(ens.at(p, c), ref);
        d[p] = v * v;
      }
      auto m = detail::mean_se(d, ens.diverged);
      BoundRow row;
      row.check = "moment_closeness";
      row.when = detail::fmt_time(ts[c]);
      row.empirical = m.mean;
      row.std_error = m.se;
      row.bound = compute_h(kit, sys, ts[c]);
      row.slack = inf_dist(eu[c], ref);
      row.pass = std::sqrt(row.empirical) <= std::sqrt(row.bound + 3.0 * row.std_error) + row.slack;
      rep.rows.push_back(row);
    }
  }
  return rep;
}

/**
 * E ||xi(t) - xi(s)||_2^2 <= C |t - s| on the 5 x 5 grid of (s, t) in
 * {0, tau/4, tau/2, 3tau/4, tau}, deterministic start a.
 */
inline BoundReport validate_increment_bound(const SysModel &sys, const Vec &a, const Vec &u, const Vec &w, double tau,
                                            const MCOptions &opt) {
  detail::need_divisible(opt.steps, 4);
  std::vector<double> ts;
  std::vector<int> cps;
  for (int k = 0; k <= 4; ++k) {
    ts.push_back(tau * k / 4.0);
    cps.push_back(opt.steps * k / 4);
  }
  auto ens = run_ensemble(sys, a, u, w, tau, opt.steps, cps, opt);
  const double C = compute_C(sys, sq_two_norm(a), tau);
  BoundReport rep;
  rep.name = "increment_bound";
  rep.paths = opt.paths;
  rep.diverged = ens.diverged_count();
  rep.note = "C=" + expr::format_real(C);
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = 0; j < ts.size(); ++j) {
      Vec d(opt.paths);
      for (std::size_t p = 0; p < opt.paths; ++p) {
        auto xs = ens.at(p, i), xt = ens.at(p, j);
        double s = 0.0;
        for (int k = 0; k < sys.n; ++k) s += (xt[std::size_t(k)] - xs[std::size_t(k)]) * (xt[std::size_t(k)] - xs[std::size_t(k)]);
        d[p] = s;
      }
      auto m = detail::mean_se(d, ens.diverged);
      BoundRow row;
      row.check = "increment_bound";
      row.when = detail::fmt_time(ts[i]) + ";" + detail::fmt_time(ts[j]);
      row.empirical = m.mean;
      row.std_error = m.se;
      row.bound = C * std::abs(ts[j] - ts[i]);
      row.pass = row.empirical <= row.bound + 3.0 * row.std_error;
      rep.rows.push_back(row);
    }
  return rep;
}

/// Two starting states and constant signals for the incremental-stability check.
struct IncrementalCase {
  Vec a, a2;
  Vec u, u2;
  Vec w, w2;
};

/**
 * E ||xi - xi'||_inf^2 against beta(||a - a'||^2, t) + rho_u(||u - u'||) +
 * rho_d(||w - w'||^2) at t in {T/4, T/2, T}; both paths share the Brownian
 * increments.
 */
inline BoundReport validate_delta_iss(const SysModel &sys, const BoundKit &kit, const IncrementalCase &ic, double T,
                                      const MCOptions &opt) {
  detail::need_divisible(opt.steps, 4);
  const std::vector<double> ts = {T / 4, T / 2, T};
  std::vector<int> cps;
  for (double t : ts) cps.push_back(detail::steps_at(t, T, opt.steps));
  auto ens = run_coupled_ensembles(sys, {ic.a, ic.a2}, {ic.u, ic.u2}, {ic.w, ic.w2}, T, opt.steps, cps, opt);
  std::vector<char> bad(opt.paths);
  for (std::size_t p = 0; p < opt.paths; ++p) bad[p] = ens[0].diverged[p] || ens[1].diverged[p];
  BoundReport rep;
  rep.name = "delta_iss";
  rep.paths = opt.paths;
  rep.diverged = std::size_t(std::count(bad.begin(), bad.end(), 1));
  const double da = inf_dist(ic.a, ic.a2), du = inf_dist(ic.u, ic.u2), dw = inf_dist(ic.w, ic.w2);
  for (std::size_t c = 0; c < ts.size(); ++c) {
    Vec d(opt.paths);
    for (std::size_t p = 0; p < opt.paths; ++p) {
      double v = inf_dist(ens[0].at(p, c), ens[1].at(p, c));
      d[p] = v * v;
    }
    auto m = detail::mean_se(d, bad);
    BoundRow row;
    row.check = "delta_iss";
    row.when = detail::fmt_time(ts[c]);
    row.empirical = m.mean;
    row.std_error = m.se;
    row.bound = kit.beta(da * da, ts[c]) + kit.rho_u(du) + kit.rho_d(dw * dw);
    row.pass = row.empirical <= row.bound + 3.0 * row.std_error;
    rep.rows.push_back(row);
  }
  return rep;
}

struct BisimStepOptions {
  std::size_t pairs = 1000;
  std::size_t paths = 1000;
  std::uint64_t seed = kDefaultSeed;
  int steps = 2048;
  unsigned workers = 1;
  double eps = 0.0;
  Vec eps_tilde; // per disturbance block
};

/**
 * One step of the relation. Each sampled pair (x_hat, x) has
 * V(x_hat, x) <= alpha_low(eps^2); the concrete input is random in U and the
 * abstract one is its nearest grid input; the abstract disturbance symbol is
 * random and the concrete one lies within eps~ of it. The abstract
 * successor nearest to the nominal endpoint must keep
 * E V(x_hat', xi(tau)) <= alpha_low(eps^2) + 3 SE. One row per pair.
 */
inline BoundReport validate_bisim_step(const FiniteAbstraction &abs, const SysModel &sys,
                                       const QuadraticCertificate &cert, const BoundKit &kit,
                                       const BisimStepOptions &opt) {
  BoundReport rep;
  rep.name = "bisim_step";
  rep.paths = opt.pairs * opt.paths;
  if (abs.n_states() == 0) return rep;
  const double level = kit.alpha_low(opt.eps * opt.eps);
  Grid ig = Grid::input_grid(sys.input, abs.omega);
  std::mt19937_64 rng = path_rng(opt.seed, UINT64_MAX);
  FlowOptions fo;
  fo.tolerance = *std::min_element(abs.eta.begin(), abs.eta.end()) / 10.0;

  struct Case {
    Vec xh, x, u, w;
    std::size_t succ_state;
  };
  std::vector<Case> cases;
  std::size_t attempts = 0;
  while (cases.size() < opt.pairs && attempts < 1000 * opt.pairs) {
    ++attempts;
    Case c;
    std::size_t s = std::uniform_int_distribution<std::size_t>(0, abs.n_states() - 1)(rng);
    c.xh.assign(abs.states.at(s).begin(), abs.states.at(s).end());
    c.x = sys.domain.sample(rng);
    if (cert.V(c.xh, c.x) > level) continue;
    c.u = sys.input.sample(rng);
    std::size_t mu = std::size_t(ig.nearest(c.u));
    std::size_t nu = std::uniform_int_distribution<std::size_t>(0, abs.n_dists() - 1)(rng);
    auto wh = abs.dists.at(nu);
    c.w.assign(wh.begin(), wh.end());
    std::size_t off = 0;
    for (std::size_t b = 0; b < abs.blocks.size(); ++b)
      for (int k = 0; k < abs.blocks[b]; ++k, ++off) {
        double lo = std::max(sys.dist.lo[off], wh[off] - abs.eps_tilde.at(b));
        double hi = std::min(sys.dist.hi[off], wh[off] + abs.eps_tilde.at(b));
        lo = std::min(lo, hi);
        c.w[off] = lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
      }
    const Transition &t = abs.at(s, mu, nu);
    if (t.succ.empty()) {
      ++rep.skipped;
      continue;
    }
    FlowResult fr = flow_nominal(sys, c.xh, abs.inputs.at(mu), wh, abs.tau, fo);
    std::size_t best = t.succ.front();
    double bd = std::numeric_limits<double>::infinity();
    for (auto y : t.succ) {
      double d = inf_dist(abs.states.at(y), fr.x);
      if (d < bd) bd = d, best = y;
    }
    c.succ_state = best;
    cases.push_back(std::move(c));
  }
  if (cases.size() < opt.pairs) rep.note = "only " + std::to_string(cases.size()) + " admissible pairs sampled";

  for (std::size_t k = 0; k < cases.size(); ++k) {
    const Case &c = cases[k];
    MCOptions mo;
    mo.paths = opt.paths;
    mo.seed = opt.seed + 1 + k;
    mo.steps = opt.steps;
    mo.workers = opt.workers;
    auto ens = run_ensemble(sys, c.x, c.u, c.w, abs.tau, opt.steps, {opt.steps}, mo);
    rep.diverged += ens.diverged_count();
    Vec v(opt.paths);
    auto xh2 = abs.states.at(c.succ_state);
    for (std::size_t p = 0; p < opt.paths; ++p) v[p] = cert.V(xh2, ens.at(p, 0));
    auto m = detail::mean_se(v, ens.diverged);
    BoundRow row;
    row.check = "bisim_step";
    row.when = detail::fmt_time(abs.tau);
    row.empirical = m.mean;
    row.std_error = m.se;
    row.bound = level;
    row.pass = row.empirical <= row.bound + 3.0 * row.std_error;
    rep.rows.push_back(row);
  }
  return rep;
}

} // namespace stochabs

#endif /* STOCHABS_MCVALIDATE_HPP_ */
