/*
 * bisim.hpp
 *
 * Disturbance bisimulation between two finite metric systems: checking a
 * given relation and computing the largest one by greatest fixed point.
 */

#ifndef STOCHABS_BISIM_HPP_
#define STOCHABS_BISIM_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abstraction.hpp"
#include "netcomp.hpp"
#include "parallel.hpp"

namespace stochabs {

class IncompatibleSystems : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RelationTable {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs; // sorted ascending
  double eps = 0.0;
  Vec eps_tilde;

  bool contains(std::uint32_t a, std::uint32_t b) const {
    return std::binary_search(pairs.begin(), pairs.end(), std::make_pair(a, b));
  }
  void canonicalize() {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  }
};

struct RelationVerdict {
  bool valid = true;
  std::uint32_t x1 = 0, x2 = 0;
  char clause = 0; // 'a', 'b' or 'c'
  std::string detail;
};

namespace detail {

/// Dense membership matrix over S1 x S2.
struct RelMatrix {
  std::size_t n1 = 0, n2 = 0;
  std::vector<char> bits;

  RelMatrix(std::size_t a, std::size_t b) : n1(a), n2(b), bits(a * b, 0) {}
  bool get(std::size_t a, std::size_t b) const { return bits[a * n2 + b] != 0; }
  void set(std::size_t a, std::size_t b, bool v) { bits[a * n2 + b] = v; }
};

/// Compatible disturbance symbol pairs (nu1, nu2) with e(nu1, nu2) <= eps~.
inline std::vector<std::vector<std::uint32_t>> disturbance_matches(const FiniteAbstraction &s1,
                                                                   const FiniteAbstraction &s2, const Vec &eps_tilde) {
  if (s1.dists.dim != s2.dists.dim) throw IncompatibleSystems("disturbance dimensions differ");
  if (s1.states.dim != s2.states.dim) throw IncompatibleSystems("state dimensions differ");
  std::vector<int> blocks = s1.blocks;
  if (blocks.empty() && s1.dists.dim > 0) blocks = {s1.dists.dim};
  int total = 0;
  for (int b : blocks) total += b;
  if (total != s1.dists.dim) throw IncompatibleSystems("disturbance blocks do not add up to the dimension");
  if (eps_tilde.size() != blocks.size())
    throw IncompatibleSystems("eps~ has " + std::to_string(eps_tilde.size()) + " entries for " +
                              std::to_string(blocks.size()) + " disturbance blocks");
  VectorMetric em{blocks};
  std::vector<std::vector<std::uint32_t>> m(s1.n_dists());
  for (std::size_t a = 0; a < s1.n_dists(); ++a)
    for (std::size_t b = 0; b < s2.n_dists(); ++b)
      if (em.within(s1.dists.at(a), s2.dists.at(b), eps_tilde)) m[a].push_back(std::uint32_t(b));
  return m;
}

/**
 * For all mu1 there is mu2 such that for all matched disturbances every
 * successor of x1 has an R-related successor of x2. `rel(a, b)` answers
 * membership with a in the challenger's states.
 */
template <class Rel>
bool transfer_ok(const FiniteAbstraction &c, const FiniteAbstraction &r, std::size_t x1, std::size_t x2,
                 const std::vector<std::vector<std::uint32_t>> &match, const Rel &rel, std::size_t *bad_input) {
  for (std::size_t mu1 = 0; mu1 < c.n_inputs(); ++mu1) {
    bool found = false;
    for (std::size_t mu2 = 0; mu2 < r.n_inputs() && !found; ++mu2) {
      bool ok = true;
      for (std::size_t nu1 = 0; nu1 < c.n_dists() && ok; ++nu1) {
        const auto &t1 = c.at(x1, mu1, nu1);
        for (std::uint32_t nu2 : match[nu1]) {
          const auto &t2 = r.at(x2, mu2, nu2);
          for (std::uint32_t y1 : t1.succ) {
            bool hit = false;
            for (std::uint32_t y2 : t2.succ)
              if (rel(y1, y2)) {
                hit = true;
                break;
              }
            if (!hit) {
              ok = false;
              break;
            }
          }
          if (!ok) break;
        }
      }
      found = ok;
    }
    if (!found) {
      if (bad_input) *bad_input = mu1;
      return false;
    }
  }
  return true;
}

inline std::vector<std::vector<std::uint32_t>> transpose_matches(const std::vector<std::vector<std::uint32_t>> &m,
                                                                 std::size_t n2) {
  std::vector<std::vector<std::uint32_t>> t(n2);
  for (std::size_t a = 0; a < m.size(); ++a)
    for (auto b : m[a]) t[b].push_back(std::uint32_t(a));
  return t;
}

} // namespace detail

/**
 * Checks conditions (a) distance, (b) forward transfer and (c) backward
 * transfer for every pair of R; reports the first violation.
 */
inline RelationVerdict check_relation(const FiniteAbstraction &s1, const FiniteAbstraction &s2, const RelationTable &R) {
  auto m12 = detail::disturbance_matches(s1, s2, R.eps_tilde);
  auto m21 = detail::transpose_matches(m12, s2.n_dists());
  detail::RelMatrix rel(s1.n_states(), s2.n_states());
  for (auto [a, b] : R.pairs) {
    if (a >= s1.n_states() || b >= s2.n_states()) throw IncompatibleSystems("relation refers to an unknown state");
    rel.set(a, b, true);
  }
  RelationVerdict v;
  for (auto [a, b] : R.pairs) {
    double d = inf_dist(s1.states.at(a), s2.states.at(b));
    std::size_t mu = 0;
    if (d > R.eps + kGeomSlack) {
      v = {false, a, b, 'a', "distance " + expr::format_real(d) + " exceeds eps " + expr::format_real(R.eps)};
      return v;
    }
    if (!detail::transfer_ok(s1, s2, a, b, m12, [&](std::size_t y1, std::size_t y2) { return rel.get(y1, y2); }, &mu)) {
      v = {false, a, b, 'b', "input " + std::to_string(mu) + " of the first system has no matching input"};
      return v;
    }
    if (!detail::transfer_ok(s2, s1, b, a, m21, [&](std::size_t y2, std::size_t y1) { return rel.get(y1, y2); }, &mu)) {
      v = {false, a, b, 'c', "input " + std::to_string(mu) + " of the second system has no matching input"};
      return v;
    }
  }
  return v;
}

struct BisimOptions {
  unsigned workers = 1;
  /// If set, the result is emptied when it does not contain this pair.
  std::optional<std::pair<std::uint32_t, std::uint32_t>> initial;
  /// Cap on |S1| * |S2|.
  std::uint64_t max_pairs = 100'000'000;
};

/**
 * Greatest fixed point: start from all pairs within eps and delete, round by
 * round against a snapshot, every pair that fails (b) or (c).
 */
inline RelationTable largest_bisimulation(const FiniteAbstraction &s1, const FiniteAbstraction &s2, double eps,
                                          const Vec &eps_tilde, const BisimOptions &opt = {}) {
  auto m12 = detail::disturbance_matches(s1, s2, eps_tilde);
  auto m21 = detail::transpose_matches(m12, s2.n_dists());
  const std::size_t n1 = s1.n_states(), n2 = s2.n_states();
  if (detail::checked_product({n1, n2}) > opt.max_pairs) throw SizeError(detail::checked_product({n1, n2}), opt.max_pairs);
  detail::RelMatrix rel(n1, n2);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> live;
  for (std::size_t a = 0; a < n1; ++a)
    for (std::size_t b = 0; b < n2; ++b)
      if (inf_dist(s1.states.at(a), s2.states.at(b)) <= eps + kGeomSlack) {
        rel.set(a, b, true);
        live.emplace_back(std::uint32_t(a), std::uint32_t(b));
      }
  for (;;) {
    std::vector<char> drop(live.size(), 0);
    parallel_for(live.size(), opt.workers, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t k = lo; k < hi; ++k) {
        auto [a, b] = live[k];
        bool ok = detail::transfer_ok(s1, s2, a, b, m12, [&](std::size_t y1, std::size_t y2) { return rel.get(y1, y2); }, nullptr) &&
                  detail::transfer_ok(s2, s1, b, a, m21, [&](std::size_t y2, std::size_t y1) { return rel.get(y1, y2); }, nullptr);
        drop[k] = !ok;
      }
    });
    std::vector<std::pair<std::uint32_t, std::uint32_t>> next;
    bool changed = false;
    for (std::size_t k = 0; k < live.size(); ++k) {
      if (drop[k]) {
        rel.set(live[k].first, live[k].second, false);
        changed = true;
      } else {
        next.push_back(live[k]);
      }
    }
    live.swap(next);
    if (!changed) break;
  }
  RelationTable R;
  R.eps = eps;
  R.eps_tilde = eps_tilde;
  R.pairs = std::move(live);
  if (opt.initial && !R.contains(opt.initial->first, opt.initial->second)) R.pairs.clear();
  return R;
}

inline RelationTable transpose(const RelationTable &R) {
  RelationTable T = R;
  for (auto &p : T.pairs) std::swap(p.first, p.second);
  T.canonicalize();
  return T;
}

// ---------------------------------------------------------------------------
// relation files

inline std::string serialize_relation(const RelationTable &R, const std::string &hash1, const std::string &hash2) {
  std::string out = "RELATION v1\neps " + expr::format_real(R.eps) + " epstilde";
  for (double e : R.eps_tilde) out += " " + expr::format_real(e);
  out += "\nhash1 " + hash1 + "\nhash2 " + hash2 + "\npairs " + std::to_string(R.pairs.size()) + "\n";
  for (auto [a, b] : R.pairs) out += std::to_string(a) + " " + std::to_string(b) + "\n";
  return out;
}

struct RelationFile {
  RelationTable table;
  std::string hash1, hash2;
};

inline RelationFile deserialize_relation(std::string_view text) {
  detail::LineReader r;
  r.lines = detail::split_lines(text);
  if (!r.lines.empty() && r.lines.back().empty()) r.lines.pop_back();
  auto tk = detail::tokens(r.next("header"));
  if (tk.size() != 2 || tk[0] != "RELATION") throw FormatError("missing RELATION header", 1);
  if (tk[1] != "v1") throw VersionMismatch(tk[1]);
  RelationFile f;
  tk = detail::tokens(r.next("eps"));
  if (tk.size() < 3 || tk[0] != "eps" || tk[2] != "epstilde") throw FormatError("expected 'eps <real> epstilde <reals>'", r.lineno());
  f.table.eps = detail::to_real(tk[1], r.lineno());
  for (std::size_t k = 3; k < tk.size(); ++k) f.table.eps_tilde.push_back(detail::to_real(tk[k], r.lineno()));
  for (auto [kw, dst] : {std::pair<const char *, std::string *>{"hash1", &f.hash1}, {"hash2", &f.hash2}}) {
    tk = detail::tokens(r.next(kw));
    if (tk.size() != 2 || tk[0] != kw) throw FormatError(std::string("expected '") + kw + " <hex>'", r.lineno());
    *dst = tk[1];
  }
  tk = detail::tokens(r.next("pairs"));
  if (tk.size() != 2 || tk[0] != "pairs") throw FormatError("expected 'pairs <count>'", r.lineno());
  auto cnt = detail::to_count(tk[1], r.lineno());
  for (std::uint64_t k = 0; k < cnt; ++k) {
    tk = detail::tokens(r.next("pair"));
    if (tk.size() != 2) throw FormatError("expected '<x1> <x2>'", r.lineno());
    f.table.pairs.emplace_back(std::uint32_t(detail::to_count(tk[0], r.lineno())),
                               std::uint32_t(detail::to_count(tk[1], r.lineno())));
  }
  if (r.pos != r.lines.size()) throw FormatError("trailing content", r.lineno() + 1);
  f.table.canonicalize();
  return f;
}

} // namespace stochabs

#endif /* STOCHABS_BISIM_HPP_ */
