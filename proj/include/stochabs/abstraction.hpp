/*
 * abstraction.hpp
 *
 * Finite deterministic metric abstractions over state/input grids and
 * disturbance symbols, their construction from nominal flows, and the
 * canonical text format.
 */

#ifndef STOCHABS_ABSTRACTION_HPP_
#define STOCHABS_ABSTRACTION_HPP_

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flow.hpp"
#include "grid.hpp"
#include "parallel.hpp"
#include "system.hpp"

namespace stochabs {

class SizeError : public std::runtime_error {
public:
  SizeError(std::uint64_t cells, std::uint64_t cap)
      : std::runtime_error("abstraction has " + std::to_string(cells) + " cells, above the cap of " +
                           std::to_string(cap)),
        cells(cells) {}
  std::uint64_t cells;
};

class FormatError : public std::runtime_error {
public:
  FormatError(const std::string &msg, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line(line) {}
  int line;
};

class HashMismatch : public FormatError {
public:
  HashMismatch(const std::string &stored, const std::string &actual)
      : FormatError("content hash mismatch (stored " + stored + ", computed " + actual + ")", 0) {}
};

class VersionMismatch : public FormatError {
public:
  explicit VersionMismatch(const std::string &got) : FormatError("unsupported format version " + got, 1) {}
};

struct Transition {
  std::uint32_t state = 0, input = 0, dist = 0;
  std::vector<std::uint32_t> succ; // ascending
  bool out_of_domain = false;

  bool operator==(const Transition &) const = default;
};

struct CompositionInfo {
  std::vector<std::string> nodes;
  std::vector<std::string> external;

  bool operator==(const CompositionInfo &) const = default;
};

/**
 * @brief Finite metric system with a dense transition table indexed by
 * (state, input, disturbance) in that order of significance.
 */
struct FiniteAbstraction {
  std::string system;
  double tau = 0.0;
  Vec eta, omega;
  double eps = 0.0;
  Vec eps_tilde;           // one entry per disturbance block
  std::vector<int> blocks; // disturbance block sizes (sum = disturbance dimension)
  std::optional<CompositionInfo> composed;

  PointSet states, inputs, dists;
  std::vector<Transition> transitions;
  std::string hash;

  std::size_t n_states() const { return states.size(); }
  std::size_t n_inputs() const { return inputs.size(); }
  std::size_t n_dists() const { return dists.size(); }

  std::size_t slot(std::size_t s, std::size_t i, std::size_t d) const { return (s * n_inputs() + i) * n_dists() + d; }
  const Transition &at(std::size_t s, std::size_t i, std::size_t d) const { return transitions[slot(s, i, d)]; }

  bool operator==(const FiniteAbstraction &o) const {
    return system == o.system && tau == o.tau && eta == o.eta && omega == o.omega && eps == o.eps &&
           eps_tilde == o.eps_tilde && blocks == o.blocks && composed == o.composed && states == o.states &&
           inputs == o.inputs && dists == o.dists && transitions == o.transitions;
  }
};

/// Lowercase hex SHA-256.
inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Singleton disturbance alphabet {0} of dimension p.
inline PointSet zero_disturbance(int p) {
  PointSet ps;
  ps.dim = p;
  ps.push(Vec(std::size_t(p), 0.0));
  return ps;
}

struct BuildOptions {
  unsigned workers = 1;
  std::uint64_t max_cells = 50'000'000;
  int substeps = 16;
  int max_substeps = 1 << 16;
  double eps = 0.0;
  Vec eps_tilde;
  std::vector<int> blocks;
};

namespace detail {

inline std::string body_text(const FiniteAbstraction &a);

inline std::uint64_t checked_product(std::initializer_list<std::uint64_t> xs) {
  std::uint64_t p = 1;
  for (auto x : xs) {
    if (x == 0) return 0;
    if (p > UINT64_MAX / x) return UINT64_MAX;
    p *= x;
  }
  return p;
}

} // namespace detail

inline void seal(FiniteAbstraction &a) { a.hash = sha256_hex(detail::body_text(a)); }

/**
 * For every (grid state, grid input, disturbance symbol) triple, integrates
 * the nominal flow over tau and collects all state grid points within eta
 * (per axis, plus slack) of the endpoint.
 */
inline FiniteAbstraction build_abstraction(const SysModel &sys, double tau, const Vec &eta, const Vec &omega,
                                           const PointSet &wtilde, const BuildOptions &opt = {}) {
  if (int(eta.size()) != sys.n) throw std::invalid_argument("eta needs one entry per state axis");
  if (int(omega.size()) != sys.m) throw std::invalid_argument("omega needs one entry per input axis");
  if (wtilde.dim != sys.p) throw std::invalid_argument("disturbance symbols have the wrong dimension");
  for (double e : eta)
    if (!(e > 0.0)) throw std::invalid_argument("eta must be positive on every axis");

  Grid sg = Grid::state_grid(sys.domain, eta);
  Grid ig = Grid::input_grid(sys.input, omega);
  const std::uint64_t cells = detail::checked_product({sg.size(), ig.size(), wtilde.size()});
  if (cells > opt.max_cells) throw SizeError(cells, opt.max_cells);

  FiniteAbstraction a;
  a.system = sys.name;
  a.tau = tau;
  a.eta = eta;
  a.omega = omega;
  a.eps = opt.eps;
  a.eps_tilde = opt.eps_tilde;
  a.blocks = opt.blocks;
  if (a.blocks.empty() && sys.p > 0) {
    a.blocks = {sys.p};
    if (a.eps_tilde.empty()) a.eps_tilde = {0.0};
  }
  a.states = sg.points();
  a.inputs = ig.points();
  a.dists = wtilde;
  a.transitions.resize(cells);

  FlowOptions fo;
  fo.substeps = opt.substeps;
  fo.max_substeps = opt.max_substeps;
  fo.tolerance = *std::min_element(eta.begin(), eta.end()) / 10.0;

  const std::size_t NI = a.n_inputs(), ND = a.n_dists();
  parallel_for(std::size_t(cells), opt.workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      std::size_t s = k / (NI * ND), i = (k / ND) % NI, d = k % ND;
      FlowResult fr = flow_nominal(sys, a.states.at(s), a.inputs.at(i), a.dists.at(d), tau, fo);
      Transition &t = a.transitions[k];
      t.state = std::uint32_t(s);
      t.input = std::uint32_t(i);
      t.dist = std::uint32_t(d);
      t.succ = sg.within(fr.x, eta);
      t.out_of_domain = fr.out_of_domain || !sys.domain.contains(fr.x, kGeomSlack);
    }
  });
  seal(a);
  return a;
}

namespace detail {

inline void put_reals(std::string &out, std::span<const double> v) {
  for (double x : v) {
    out += ' ';
    out += expr::format_real(x);
  }
}

inline void put_points(std::string &out, const char *kw, const PointSet &ps) {
  out += std::string(kw) + " " + std::to_string(ps.size()) + "\n";
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out += std::to_string(i);
    put_reals(out, ps.at(i));
    out += '\n';
  }
}

inline std::string body_text(const FiniteAbstraction &a) {
  std::string out = "STOCHABS v1\nsystem " + a.system + "\n";
  if (a.composed) {
    out += "composed";
    for (auto &n : a.composed->nodes) out += " " + n;
    out += " external";
    for (auto &n : a.composed->external) out += " " + n;
    out += '\n';
  }
  out += "tau " + expr::format_real(a.tau) + " eta";
  put_reals(out, a.eta);
  out += " omega";
  put_reals(out, a.omega);
  out += " eps " + expr::format_real(a.eps) + "\n";
  out += "epstilde";
  put_reals(out, a.eps_tilde);
  out += "\nblocks";
  for (int b : a.blocks) out += " " + std::to_string(b);
  out += '\n';
  put_points(out, "states", a.states);
  put_points(out, "inputs", a.inputs);
  put_points(out, "disturbances", a.dists);
  out += "transitions " + std::to_string(a.transitions.size()) + "\n";
  for (const auto &t : a.transitions) {
    out += std::to_string(t.state) + " " + std::to_string(t.input) + " " + std::to_string(t.dist) + " ->";
    for (auto s : t.succ) out += " " + std::to_string(s);
    if (t.out_of_domain) out += " oob";
    out += '\n';
  }
  return out;
}

} // namespace detail

inline std::string serialize(const FiniteAbstraction &a) {
  std::string body = detail::body_text(a);
  return body + "hash " + sha256_hex(body) + "\n";
}

namespace detail {

struct LineReader {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;

  int lineno() const { return int(pos); }
  std::string_view next(const char *what) {
    if (pos >= lines.size()) throw FormatError(std::string("unexpected end of file, expected ") + what, int(pos) + 1);
    return lines[pos++];
  }
};

inline std::vector<std::string> tokens(std::string_view l) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(l)};
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

inline double to_real(const std::string &t, int line) {
  try {
    std::size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception &) {
    throw FormatError("malformed number '" + t + "'", line);
  }
}

inline std::uint64_t to_count(const std::string &t, int line) {
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("malformed count '" + t + "'", line);
  try {
    return std::stoull(t);
  } catch (const std::exception &) {
    throw FormatError("count out of range '" + t + "'", line);
  }
}

inline PointSet get_points(LineReader &r, const char *kw, int dim) {
  auto head = tokens(r.next(kw));
  if (head.size() != 2 || head[0] != kw) throw FormatError(std::string("expected '") + kw + " <count>'", r.lineno());
  std::uint64_t cnt = to_count(head[1], r.lineno());
  PointSet ps;
  ps.dim = dim;
  Vec p(std::size_t(dim), 0.0);
  for (std::uint64_t i = 0; i < cnt; ++i) {
    auto tk = tokens(r.next(kw));
    if (tk.size() != std::size_t(dim) + 1) throw FormatError(std::string("wrong arity in ") + kw + " entry", r.lineno());
    if (to_count(tk[0], r.lineno()) != i) throw FormatError(std::string(kw) + " entries out of order", r.lineno());
    for (int k = 0; k < dim; ++k) p[std::size_t(k)] = to_real(tk[std::size_t(k) + 1], r.lineno());
    ps.push(p);
  }
  return ps;
}

} // namespace detail

/// Parses the text format and checks the content hash.
inline FiniteAbstraction deserialize(std::string_view text) {
  using detail::tokens, detail::to_real, detail::to_count;
  std::size_t hpos = text.rfind("\nhash ");
  if (hpos == std::string_view::npos) {
    if (!text.starts_with("STOCHABS")) throw FormatError("missing STOCHABS header", 1);
    throw FormatError("missing hash footer", 0);
  }
  std::string_view body = text.substr(0, hpos + 1);

  detail::LineReader r;
  r.lines = detail::split_lines(body);
  if (!r.lines.empty() && r.lines.back().empty()) r.lines.pop_back();

  auto hdr = tokens(r.next("header"));
  if (hdr.size() != 2 || hdr[0] != "STOCHABS") throw FormatError("malformed header", 1);
  if (hdr[1] != "v1") throw VersionMismatch(hdr[1]);
  auto foot = tokens(text.substr(hpos + 1));
  if (foot.size() != 2 || foot[0] != "hash") throw FormatError("malformed hash footer", 0);
  std::string actual = sha256_hex(body);
  if (foot[1] != actual) throw HashMismatch(foot[1], actual);

  FiniteAbstraction a;
  auto sys = tokens(r.next("system"));
  if (sys.size() != 2 || sys[0] != "system") throw FormatError("expected 'system <name>'", r.lineno());
  a.system = sys[1];

  auto tk = tokens(r.next("parameters"));
  if (!tk.empty() && tk[0] == "composed") {
    CompositionInfo ci;
    std::size_t k = 1;
    for (; k < tk.size() && tk[k] != "external"; ++k) ci.nodes.push_back(tk[k]);
    if (k == tk.size()) throw FormatError("composed line lacks 'external'", r.lineno());
    for (++k; k < tk.size(); ++k) ci.external.push_back(tk[k]);
    a.composed = ci;
    tk = tokens(r.next("parameters"));
  }
  {
    std::size_t k = 0;
    auto expect = [&](const char *kw) {
      if (k >= tk.size() || tk[k] != kw) throw FormatError(std::string("expected '") + kw + "'", r.lineno());
      ++k;
    };
    auto reals_until = [&](const char *stop) {
      Vec v;
      while (k < tk.size() && (stop == nullptr || tk[k] != stop)) v.push_back(to_real(tk[k++], r.lineno()));
      return v;
    };
    expect("tau");
    if (k >= tk.size()) throw FormatError("missing tau value", r.lineno());
    a.tau = to_real(tk[k++], r.lineno());
    expect("eta");
    a.eta = reals_until("omega");
    expect("omega");
    a.omega = reals_until("eps");
    expect("eps");
    if (k + 1 != tk.size()) throw FormatError("expected a single eps value", r.lineno());
    a.eps = to_real(tk[k], r.lineno());
  }
  tk = tokens(r.next("epstilde"));
  if (tk.empty() || tk[0] != "epstilde") throw FormatError("expected 'epstilde'", r.lineno());
  for (std::size_t k = 1; k < tk.size(); ++k) a.eps_tilde.push_back(to_real(tk[k], r.lineno()));
  tk = tokens(r.next("blocks"));
  if (tk.empty() || tk[0] != "blocks") throw FormatError("expected 'blocks'", r.lineno());
  int pdim = 0;
  for (std::size_t k = 1; k < tk.size(); ++k) {
    a.blocks.push_back(int(to_count(tk[k], r.lineno())));
    pdim += a.blocks.back();
  }
  if (a.blocks.size() != a.eps_tilde.size()) throw FormatError("epstilde and blocks lengths differ", r.lineno());

  a.states = detail::get_points(r, "states", int(a.eta.size()));
  a.inputs = detail::get_points(r, "inputs", int(a.omega.size()));
  a.dists = detail::get_points(r, "disturbances", pdim);

  tk = tokens(r.next("transitions"));
  if (tk.size() != 2 || tk[0] != "transitions") throw FormatError("expected 'transitions <count>'", r.lineno());
  const std::uint64_t cnt = to_count(tk[1], r.lineno());
  if (cnt != std::uint64_t(a.n_states()) * a.n_inputs() * a.n_dists())
    throw FormatError("transition count does not match the state, input and disturbance counts", r.lineno());
  a.transitions.resize(cnt);
  for (std::uint64_t k = 0; k < cnt; ++k) {
    tk = tokens(r.next("transition"));
    if (tk.size() < 4 || tk[3] != "->") throw FormatError("expected '<state> <input> <dist> -> <succ...>'", r.lineno());
    Transition &t = a.transitions[k];
    t.state = std::uint32_t(to_count(tk[0], r.lineno()));
    t.input = std::uint32_t(to_count(tk[1], r.lineno()));
    t.dist = std::uint32_t(to_count(tk[2], r.lineno()));
    if (a.slot(t.state, t.input, t.dist) != k) throw FormatError("transitions out of canonical order", r.lineno());
    std::size_t end = tk.size();
    if (tk.back() == "oob") {
      t.out_of_domain = true;
      --end;
    }
    for (std::size_t j = 4; j < end; ++j) {
      auto s = to_count(tk[j], r.lineno());
      if (s >= a.n_states()) throw FormatError("successor index out of range", r.lineno());
      if (!t.succ.empty() && s <= t.succ.back()) throw FormatError("successors not strictly ascending", r.lineno());
      t.succ.push_back(std::uint32_t(s));
    }
  }
  if (r.pos != r.lines.size()) throw FormatError("trailing content before hash", r.lineno() + 1);
  a.hash = std::move(actual);
  return a;
}

/// min/max successor count over transitions whose endpoint stayed in the domain.
struct SuccessorStats {
  std::size_t min_in_domain = 0, max_in_domain = 0;
  std::size_t in_domain = 0, out_of_domain = 0;
};

inline SuccessorStats successor_stats(const FiniteAbstraction &a) {
  SuccessorStats st;
  st.min_in_domain = SIZE_MAX;
  for (const auto &t : a.transitions) {
    if (t.out_of_domain) {
      ++st.out_of_domain;
      continue;
    }
    ++st.in_domain;
    st.min_in_domain = std::min(st.min_in_domain, t.succ.size());
    st.max_in_domain = std::max(st.max_in_domain, t.succ.size());
  }
  if (st.in_domain == 0) st.min_in_domain = 0;
  return st;
}

} // namespace stochabs

#endif /* STOCHABS_ABSTRACTION_HPP_ */
