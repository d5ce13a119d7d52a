/*
 * system.hpp
 *
 * Stochastic control systems  dx = f(x,u,w) dt + sigma(x) dB  with compact
 * working boxes, regularity constants and an optional quadratic certificate,
 * plus networks of such systems and the line-oriented file format for both.
 */

#ifndef STOCHABS_SYSTEM_HPP_
#define STOCHABS_SYSTEM_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "expr.hpp"

namespace stochabs {

using Vec = std::vector<double>;

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double inf_dist(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sq_two_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// Axis-aligned box [lo, hi]; a zero-dimensional box holds the single empty point.
struct Box {
  Vec lo;
  Vec hi;

  std::size_t dim() const { return lo.size(); }
  bool contains(std::span<const double> x, double slack = 0.0) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    return true;
  }
  /// sup over the box of the infinity norm
  double sup_inf_norm() const {
    double m = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) m = std::max({m, std::abs(lo[i]), std::abs(hi[i])});
    return m;
  }
  /// sup over the box of the squared 2-norm
  double sup_sq_two_norm() const {
    double s = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) s += std::max(lo[i] * lo[i], hi[i] * hi[i]);
    return s;
  }
  /// sup_{y,z in box} ||y - z||_inf
  double inf_diameter() const {
    double m = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) m = std::max(m, hi[i] - lo[i]);
    return m;
  }
  Vec center() const {
    Vec c(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
    return c;
  }
  template <class Rng> Vec sample(Rng &rng) const {
    Vec x(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
      std::uniform_real_distribution<double> d(lo[i], hi[i]);
      x[i] = lo[i] == hi[i] ? lo[i] : d(rng);
    }
    return x;
  }
};

/// Quadratic incremental Lyapunov certificate V(x,x') = 1/2 (x-x')^T P (x-x').
struct CertificateDecl {
  std::vector<double> P; // row-major n x n
  double kappa = 0.0;
};

/**
 * @brief A stochastic control system with compact working region.
 *
 * Diffusion entries that are not declared are zero. Expressions are
 * compiled once at construction.
 */
class SysModel {
public:
  std::string name;
  int n = 0, m = 0, p = 0, r = 0;
  std::vector<Expr> drift;                  // n
  std::vector<Expr> diffusion;              // n*r row-major, nullptr = 0
  Box domain;                               // D
  Box input;                                // U
  Box dist;                                 // W
  double Lf = 0.0;
  double Lsigma = 0.0;
  double K = 0.0;
  std::optional<double> Lu_override;
  std::optional<double> Lw_override;
  std::optional<CertificateDecl> cert;

  double Lu() const { return Lu_override.value_or(Lf); }
  double Lw() const { return Lw_override.value_or(Lf); }
  VarDims dims() const { return {n, m, p}; }

  /// Must be called after the expression fields change.
  void compile() {
    drift_c_.clear();
    diff_c_.clear();
    for (const auto &e : drift) drift_c_.emplace_back(e);
    diff_nz_.clear();
    for (std::size_t k = 0; k < diffusion.size(); ++k)
      if (diffusion[k]) {
        diff_c_.emplace_back(diffusion[k]);
        diff_nz_.push_back(k);
      }
  }

  void eval_drift(std::span<const double> x, std::span<const double> u, std::span<const double> w,
                  std::span<double> out) const {
    for (int i = 0; i < n; ++i) out[i] = drift_c_[i](x, u, w);
  }
  Vec drift_at(std::span<const double> x, std::span<const double> u, std::span<const double> w) const {
    Vec out(n);
    eval_drift(x, u, w, out);
    return out;
  }

  /// sigma(x) as row-major n x r
  void eval_diffusion(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < diff_c_.size(); ++k) out[diff_nz_[k]] = diff_c_[k](x, {}, {});
  }
  Vec diffusion_at(std::span<const double> x) const {
    Vec out(std::size_t(n * r));
    eval_diffusion(x, out);
    return out;
  }
  bool has_diffusion() const { return !diff_c_.empty(); }

  /// f(0,0,0) = 0 and sigma(0) = 0 within tol.
  bool origin_is_equilibrium(double tol = 1e-12) const {
    Vec zx(n, 0.0), zu(m, 0.0), zw(p, 0.0);
    return inf_norm(drift_at(zx, zu, zw)) <= tol && inf_norm(diffusion_at(zx)) <= tol;
  }

private:
  std::vector<CompiledExpr> drift_c_;
  std::vector<CompiledExpr> diff_c_;
  std::vector<std::size_t> diff_nz_;
};

struct NetworkNode {
  std::string name;
  SysModel sys;
  double eps = 0.0;
  std::optional<double> eta;
  std::optional<double> omega;
};

/**
 * @brief Nodes over an irreflexive connectivity relation.
 *
 * An edge (j, i) means node j's state feeds node i's disturbance; node i's
 * disturbance vector is the concatenation of its neighbours' states in
 * ascending node order.
 */
struct NetworkSpec {
  std::vector<NetworkNode> nodes;
  std::vector<std::pair<int, int>> edges; // (j, i), 0-based
  double tau = 0.0;

  std::size_t size() const { return nodes.size(); }
};

class SpecError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Cursor {
  std::string_view line;
  int lineno;
  std::size_t at = 0;

  [[noreturn]] void fail(const std::string &msg) const { throw ParseError(msg, lineno, int(at) + 1); }
  [[noreturn]] void fail_at(const std::string &msg, std::size_t pos) const { throw ParseError(msg, lineno, int(pos) + 1); }
  void ws() {
    while (at < line.size() && std::isspace(static_cast<unsigned char>(line[at]))) ++at;
  }
  bool done() {
    ws();
    return at >= line.size();
  }
  std::string word() {
    ws();
    std::size_t s = at;
    while (at < line.size() && !std::isspace(static_cast<unsigned char>(line[at])) && line[at] != '=' &&
           line[at] != '[' && line[at] != ']' && line[at] != ',' && line[at] != ';' && line[at] != '\'')
      ++at;
    if (s == at) fail("expected a word");
    return std::string(line.substr(s, at - s));
  }
  void expect(std::string_view tok) {
    ws();
    if (line.substr(at, tok.size()) != tok) fail("expected '" + std::string(tok) + "'");
    at += tok.size();
  }
  bool accept(std::string_view tok) {
    ws();
    if (line.substr(at, tok.size()) == tok) {
      at += tok.size();
      return true;
    }
    return false;
  }
  double real() {
    ws();
    std::size_t s = at;
    std::string buf(line.substr(at));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(buf, &used);
    } catch (...) {
      fail("expected a real number");
    }
    at += used;
    if (!std::isfinite(v)) fail_at("non-finite number", s);
    return v;
  }
  long integer() {
    ws();
    std::size_t s = at;
    if (at < line.size() && (line[at] == '-' || line[at] == '+')) ++at;
    while (at < line.size() && std::isdigit(static_cast<unsigned char>(line[at]))) ++at;
    if (s == at || (at == s + 1 && !std::isdigit(static_cast<unsigned char>(line[s])))) fail_at("expected an integer", s);
    return std::stol(std::string(line.substr(s, at - s)));
  }
  /// key=value where value is a real
  double keyed_real(std::string_view key) {
    ws();
    std::size_t s = at;
    std::string k = word();
    if (k != key) fail_at("expected '" + std::string(key) + "='", s);
    expect("=");
    return real();
  }
  /// [a,b]
  std::pair<double, double> interval() {
    expect("[");
    double a = real();
    expect(",");
    double b = real();
    expect("]");
    return {a, b};
  }
  /// x3 style variable with prefix; returns 0-based index
  int indexed(char prefix, int limit) {
    ws();
    std::size_t s = at;
    std::string w = word();
    if (w.size() < 2 || w[0] != prefix) fail_at(std::string("expected ") + prefix + "<index>", s);
    for (std::size_t i = 1; i < w.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(w[i]))) fail_at(std::string("expected ") + prefix + "<index>", s);
    int idx = std::stoi(w.substr(1));
    if (idx < 1 || idx > limit) fail_at("variable index out of range: " + w, s);
    return idx - 1;
  }
};

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t s = 0;
  while (s <= text.size()) {
    std::size_t e = text.find('\n', s);
    if (e == std::string_view::npos) e = text.size();
    std::string_view l = text.substr(s, e - s);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    out.push_back(l);
    s = e + 1;
  }
  return out;
}

inline std::string_view strip_comment(std::string_view l) {
  auto h = l.find('#');
  return h == std::string_view::npos ? l : l.substr(0, h);
}

inline Vec parse_matrix_literal(Cursor &c, int n) {
  Vec P;
  c.ws();
  const std::size_t open = c.at;
  c.expect("[");
  for (;;) {
    c.ws();
    if (c.accept("]")) break;
    if (c.accept(";") || c.accept(",")) continue;
    P.push_back(c.real());
  }
  if (int(P.size()) != n * n)
    c.fail_at("certificate matrix needs " + std::to_string(n * n) + " entries, got " + std::to_string(P.size()), open);
  return P;
}

} // namespace detail

/**
 * Parses a system description. Directives:
 *
 *   system <name>
 *   dims n=<int> m=<int> p=<int> r=<int>
 *   domain x<i> in [a,b]      input u<i> in [a,b]      dist w<i> in [a,b]
 *   drift x<i>' = <expr>
 *   diff sigma[<i>][<k>] = <expr>
 *   const Lf=<real> Lsigma=<real> K=<real> [Lu=<real>] [Lw=<real>]
 *   cert P=[<row-major entries, ';' between rows>] kappa=<real>
 *
 * `#` starts a comment. When `require_dist` is false the dist boxes may be
 * left undeclared (network nodes get them from their neighbours).
 */
inline SysModel parse_system_text(std::string_view text, bool require_dist = true) {
  SysModel s;
  bool have_name = false, have_dims = false, have_const = false;
  std::vector<char> dom_set, in_set, dist_set, drift_set;
  auto lines = detail::split_lines(text);
  int last_line = 1;
  for (std::size_t li = 0; li < lines.size(); ++li) {
    int lineno = int(li) + 1;
    std::string_view raw = detail::strip_comment(lines[li]);
    detail::Cursor c{raw, lineno};
    if (c.done()) continue;
    last_line = lineno;
    std::size_t kw_at = c.at;
    std::string kw = c.word();
    auto need_dims = [&] {
      if (!have_dims) c.fail_at("'" + kw + "' before 'dims'", kw_at);
    };
    if (kw == "system") {
      s.name = c.word();
      have_name = true;
    } else if (kw == "dims") {
      long n = 0, m = 0, p = 0, r = 0;
      const std::pair<const char *, long *> slots[] = {{"n", &n}, {"m", &m}, {"p", &p}, {"r", &r}};
      for (auto [key, dst] : slots) {
        c.ws();
        std::size_t ks = c.at;
        if (c.word() != key) c.fail_at(std::string("expected '") + key + "='", ks);
        c.expect("=");
        std::size_t vs = c.at;
        *dst = c.integer();
        if (*dst < 0 || (key == std::string("n") && *dst < 1)) c.fail_at("dimension out of range", vs);
      }
      s.n = int(n), s.m = int(m), s.p = int(p), s.r = int(r);
      s.drift.assign(s.n, nullptr);
      s.diffusion.assign(std::size_t(s.n * s.r), nullptr);
      s.domain = Box{Vec(s.n, 0.0), Vec(s.n, 0.0)};
      s.input = Box{Vec(s.m, 0.0), Vec(s.m, 0.0)};
      s.dist = Box{Vec(s.p, 0.0), Vec(s.p, 0.0)};
      dom_set.assign(s.n, 0), in_set.assign(s.m, 0), dist_set.assign(s.p, 0), drift_set.assign(s.n, 0);
      have_dims = true;
    } else if (kw == "domain" || kw == "input" || kw == "dist") {
      need_dims();
      char pre = kw == "domain" ? 'x' : kw == "input" ? 'u' : 'w';
      int lim = kw == "domain" ? s.n : kw == "input" ? s.m : s.p;
      int idx = c.indexed(pre, lim);
      c.ws();
      std::size_t ks = c.at;
      if (c.word() != "in") c.fail_at("expected 'in'", ks);
      c.ws();
      std::size_t is = c.at;
      auto [a, b] = c.interval();
      if (!(a <= b)) c.fail_at("empty interval", is);
      Box &bx = kw == "domain" ? s.domain : kw == "input" ? s.input : s.dist;
      bx.lo[idx] = a;
      bx.hi[idx] = b;
      (kw == "domain" ? dom_set : kw == "input" ? in_set : dist_set)[idx] = 1;
    } else if (kw == "drift") {
      need_dims();
      int idx = c.indexed('x', s.n);
      c.expect("'");
      c.expect("=");
      c.ws();
      s.drift[idx] = parse_expr(raw.substr(c.at), s.dims(), lineno, int(c.at) + 1);
      drift_set[idx] = 1;
    } else if (kw == "diff") {
      need_dims();
      c.ws();
      std::size_t ks = c.at;
      if (!c.accept("sigma")) c.fail_at("expected 'sigma[i][k]'", ks);
      c.expect("[");
      std::size_t is = c.at;
      long i = c.integer();
      c.expect("]");
      c.expect("[");
      std::size_t cs = c.at;
      long k = c.integer();
      c.expect("]");
      if (i < 1 || i > s.n) c.fail_at("diffusion row out of range", is);
      if (k < 1 || k > s.r) c.fail_at("diffusion column out of range", cs);
      c.expect("=");
      c.ws();
      std::size_t es = c.at;
      Expr e = parse_expr(raw.substr(c.at), s.dims(), lineno, int(c.at) + 1);
      if (expr::uses_kind(e, VarKind::Input) || expr::uses_kind(e, VarKind::Disturbance))
        c.fail_at("diffusion may depend on state variables only", es);
      s.diffusion[std::size_t((i - 1) * s.r + (k - 1))] = e;
    } else if (kw == "const") {
      std::map<std::string, double> vals;
      while (!c.done()) {
        std::size_t ks = c.at;
        std::string key = c.word();
        c.expect("=");
        std::size_t vs = c.at;
        double v = c.real();
        if (key != "Lf" && key != "Lsigma" && key != "K" && key != "Lu" && key != "Lw")
          c.fail_at("unknown constant '" + key + "'", ks);
        if (v < 0.0 || (key == "K" && v <= 0.0)) c.fail_at("constant '" + key + "' out of range", vs);
        vals[key] = v;
      }
      for (const char *req : {"Lf", "Lsigma", "K"})
        if (!vals.count(req)) c.fail(std::string("missing constant ") + req);
      s.Lf = vals["Lf"], s.Lsigma = vals["Lsigma"], s.K = vals["K"];
      if (vals.count("Lu")) s.Lu_override = vals["Lu"];
      if (vals.count("Lw")) s.Lw_override = vals["Lw"];
      have_const = true;
    } else if (kw == "cert") {
      need_dims();
      CertificateDecl cd;
      c.ws();
      std::size_t ks = c.at;
      if (c.word() != "P") c.fail_at("expected 'P='", ks);
      c.expect("=");
      cd.P = detail::parse_matrix_literal(c, s.n);
      cd.kappa = c.keyed_real("kappa");
      s.cert = cd;
    } else {
      c.fail_at("unknown directive '" + kw + "'", kw_at);
    }
    if (!c.done() && kw != "drift" && kw != "diff") c.fail("trailing characters");
  }
  auto eof_fail = [&](const std::string &msg) { throw ParseError(msg, last_line, 1); };
  if (!have_name) eof_fail("missing 'system' directive");
  if (!have_dims) eof_fail("missing 'dims' directive");
  if (!have_const) eof_fail("missing 'const' directive");
  for (int i = 0; i < s.n; ++i) {
    if (!drift_set[i]) eof_fail("missing drift for x" + std::to_string(i + 1));
    if (!dom_set[i]) eof_fail("missing domain for x" + std::to_string(i + 1));
  }
  for (int i = 0; i < s.m; ++i)
    if (!in_set[i]) eof_fail("missing input box for u" + std::to_string(i + 1));
  if (require_dist)
    for (int i = 0; i < s.p; ++i)
      if (!dist_set[i]) eof_fail("missing dist box for w" + std::to_string(i + 1));
  s.compile();
  return s;
}

using FileLoader = std::function<std::string(const std::string &)>;

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Ascending neighbours j with (j, i) in the relation.
inline std::vector<int> neighbors(const NetworkSpec &spec, int i) {
  if (i < 0 || std::size_t(i) >= spec.size()) throw SpecError("unknown node " + std::to_string(i));
  std::vector<int> out;
  for (auto [j, k] : spec.edges)
    if (k == i) out.push_back(j);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/**
 * Checks compatibility (p_i equals the summed neighbour state dimension) and
 * installs each node's disturbance box as the product of its neighbours'
 * domains.
 */
inline void wire_network(NetworkSpec &spec) {
  for (auto [j, i] : spec.edges)
    if (j == i) throw SpecError("self-loop on node " + spec.nodes[std::size_t(i)].name);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto nb = neighbors(spec, int(i));
    Box w;
    for (int j : nb) {
      const Box &d = spec.nodes[std::size_t(j)].sys.domain;
      w.lo.insert(w.lo.end(), d.lo.begin(), d.lo.end());
      w.hi.insert(w.hi.end(), d.hi.begin(), d.hi.end());
    }
    SysModel &s = spec.nodes[i].sys;
    if (int(w.dim()) != s.p)
      throw SpecError("node " + spec.nodes[i].name + " has p=" + std::to_string(s.p) +
                      " but its neighbours provide " + std::to_string(w.dim()) + " state components");
    s.dist = w;
  }
}

/**
 * Parses a network description:
 *
 *   network
 *   node <name> file=<path> eps=<real> [eta=<real>] [omega=<real>]
 *   edge <j> -> <i>          (node names or 1-based indices)
 *   tau=<real>
 */
inline NetworkSpec parse_network_text(std::string_view text, const FileLoader &load) {
  NetworkSpec net;
  bool have_header = false, have_tau = false;
  std::vector<std::tuple<std::string, std::string, int, std::size_t>> pending_edges;
  auto lines = detail::split_lines(text);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    int lineno = int(li) + 1;
    std::string_view raw = detail::strip_comment(lines[li]);
    detail::Cursor c{raw, lineno};
    if (c.done()) continue;
    std::size_t kw_at = c.at;
    if (!have_header) {
      if (c.word() != "network") c.fail_at("expected 'network'", kw_at);
      have_header = true;
    } else if (c.accept("tau")) {
      c.expect("=");
      std::size_t vs = c.at;
      net.tau = c.real();
      if (!(net.tau > 0.0)) c.fail_at("tau must be positive", vs);
      have_tau = true;
    } else {
      std::string kw = c.word();
      if (kw == "node") {
        NetworkNode nd;
        nd.name = c.word();
        for (const auto &o : net.nodes)
          if (o.name == nd.name) c.fail_at("duplicate node '" + nd.name + "'", kw_at);
        std::optional<std::string> file;
        bool have_eps = false;
        while (!c.done()) {
          std::size_t ks = c.at;
          std::string key = c.word();
          c.expect("=");
          if (key == "file") {
            file = c.word();
            continue;
          }
          std::size_t vs = c.at;
          double v = c.real();
          if (key == "eps") {
            if (!(v > 0.0)) c.fail_at("eps must be positive", vs);
            nd.eps = v;
            have_eps = true;
          } else if (key == "eta") {
            if (!(v > 0.0)) c.fail_at("eta must be positive", vs);
            nd.eta = v;
          } else if (key == "omega") {
            if (!(v >= 0.0)) c.fail_at("omega must be nonnegative", vs);
            nd.omega = v;
          } else {
            c.fail_at("unknown node attribute '" + key + "'", ks);
          }
        }
        if (!file) c.fail("node needs file=<path>");
        if (!have_eps) c.fail("node needs eps=<real>");
        std::string body;
        try {
          body = load(*file);
        } catch (const std::exception &e) {
          c.fail(e.what());
        }
        try {
          nd.sys = parse_system_text(body, false);
        } catch (const ParseError &e) {
          throw ParseError(*file + ": " + e.what(), lineno, 1);
        }
        net.nodes.push_back(std::move(nd));
      } else if (kw == "edge") {
        std::string from = c.word();
        c.expect("->");
        std::size_t ts = c.at;
        std::string to = c.word();
        pending_edges.emplace_back(from, to, lineno, ts);
      } else {
        c.fail_at("unknown directive '" + kw + "'", kw_at);
      }
    }
    if (!c.done()) c.fail("trailing characters");
  }
  if (!have_header) throw ParseError("missing 'network' header", 1, 1);
  if (!have_tau) throw ParseError("missing 'tau=' line", int(lines.size()), 1);
  auto resolve = [&](const std::string &id, int lineno) -> int {
    for (std::size_t k = 0; k < net.nodes.size(); ++k)
      if (net.nodes[k].name == id) return int(k);
    bool digits = !id.empty() && std::all_of(id.begin(), id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
    if (digits) {
      long k = std::stol(id);
      if (k >= 1 && std::size_t(k) <= net.nodes.size()) return int(k - 1);
    }
    throw ParseError("unknown node '" + id + "' in edge", lineno, 1);
  };
  for (const auto &[from, to, lineno, ts] : pending_edges) {
    int j = resolve(from, lineno), i = resolve(to, lineno);
    if (i == j) throw ParseError("self-loop on node '" + from + "'", lineno, int(ts) + 1);
    net.edges.emplace_back(j, i);
  }
  std::sort(net.edges.begin(), net.edges.end());
  net.edges.erase(std::unique(net.edges.begin(), net.edges.end()), net.edges.end());
  wire_network(net);
  return net;
}

using ParsedModel = std::variant<SysModel, NetworkSpec>;

/// Dispatches on the first directive: `network` or a system description.
inline ParsedModel parse_system(std::string_view text, const FileLoader &load = read_file) {
  for (auto l : detail::split_lines(text)) {
    detail::Cursor c{detail::strip_comment(l), 0};
    if (c.done()) continue;
    if (c.word() == "network") return parse_network_text(text, load);
    break;
  }
  return parse_system_text(text);
}

/// Loads a file; relative node paths in network files resolve against its directory.
inline ParsedModel load_model(const std::string &path) {
  std::string text = read_file(path);
  auto dir = std::filesystem::path(path).parent_path();
  return parse_system(text, [dir](const std::string &p) {
    std::filesystem::path fp(p);
    return read_file(fp.is_absolute() ? p : (dir / fp).string());
  });
}

/// Infinity norm of a row-major n x r matrix (max absolute row sum).
inline double matrix_inf_norm(std::span<const double> M, int rows, int cols) {
  double m = 0.0;
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int k = 0; k < cols; ++k) s += std::abs(M[std::size_t(i * cols + k)]);
    m = std::max(m, s);
  }
  return m;
}

struct RegularityCheck {
  bool pass = true;
  double worst_ratio = 0.0; // lhs / rhs, > 1 means violated
  std::string witness;
};

struct RegularityReport {
  RegularityCheck lipschitz_f;
  RegularityCheck lipschitz_sigma;
  RegularityCheck growth;
  bool pass() const { return lipschitz_f.pass && lipschitz_sigma.pass && growth.pass; }
};

namespace detail {
inline std::string fmt_vec(std::span<const double> v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + expr::format_real(v[i]);
  return s + ")";
}
inline void record(RegularityCheck &c, double lhs, double rhs, const std::string &wit) {
  double tol = 1e-12 * std::max(1.0, std::abs(rhs));
  double ratio = rhs > 0.0 ? lhs / rhs : (lhs > tol ? INFINITY : 0.0);
  if (lhs > rhs + tol) {
    if (c.pass || ratio > c.worst_ratio) c.witness = wit;
    c.pass = false;
  }
  if (ratio > c.worst_ratio) {
    c.worst_ratio = ratio;
    if (c.pass) c.witness = wit;
  }
}
} // namespace detail

/**
 * Sampling refutation of the declared Lipschitz and linear-growth constants
 * on D x U x W (infinity norms). Box corners are always included. Success is
 * evidence only.
 */
inline RegularityReport check_regularity(const SysModel &sys, std::size_t samples, std::uint64_t seed) {
  RegularityReport rep;
  std::mt19937_64 rng(seed);
  auto corner = [](const Box &b, std::size_t mask) {
    Vec x(b.dim());
    for (std::size_t i = 0; i < b.dim(); ++i) x[i] = (mask >> (i % 64)) & 1 ? b.hi[i] : b.lo[i];
    return x;
  };
  std::vector<std::array<Vec, 3>> pts;
  std::size_t ncorner = std::min<std::size_t>(std::size_t(1) << std::min(sys.n + sys.m + sys.p, 10), 1024);
  for (std::size_t k = 0; k < ncorner; ++k)
    pts.push_back({corner(sys.domain, k), corner(sys.input, k >> sys.n), corner(sys.dist, k >> (sys.n + sys.m))});
  for (std::size_t k = 0; k < samples; ++k)
    pts.push_back({sys.domain.sample(rng), sys.input.sample(rng), sys.dist.sample(rng)});

  const std::size_t nr = std::size_t(sys.n * sys.r);
  auto check_pair = [&](const std::array<Vec, 3> &a, const std::array<Vec, 3> &b) {
    Vec fa = sys.drift_at(a[0], a[1], a[2]), fb = sys.drift_at(b[0], b[1], b[2]);
    double dx = inf_dist(a[0], b[0]), du = inf_dist(a[1], b[1]), dw = inf_dist(a[2], b[2]);
    std::string wit = "x=" + detail::fmt_vec(a[0]) + " u=" + detail::fmt_vec(a[1]) + " w=" + detail::fmt_vec(a[2]) +
                      " x'=" + detail::fmt_vec(b[0]) + " u'=" + detail::fmt_vec(b[1]) + " w'=" + detail::fmt_vec(b[2]);
    detail::record(rep.lipschitz_f, inf_dist(fa, fb), sys.Lf * (dx + du + dw), wit);
    Vec sa = sys.diffusion_at(a[0]), sb = sys.diffusion_at(b[0]);
    Vec ds(nr);
    for (std::size_t k = 0; k < nr; ++k) ds[k] = sa[k] - sb[k];
    detail::record(rep.lipschitz_sigma, matrix_inf_norm(ds, sys.n, sys.r), sys.Lsigma * dx,
                   "x=" + detail::fmt_vec(a[0]) + " x'=" + detail::fmt_vec(b[0]));
  };
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto &a = pts[k];
    Vec f = sys.drift_at(a[0], a[1], a[2]);
    Vec sg = sys.diffusion_at(a[0]);
    double lhs = std::max(std::pow(inf_norm(f), 2), std::pow(matrix_inf_norm(sg, sys.n, sys.r), 2));
    double xn = inf_norm(a[0]);
    detail::record(rep.growth, lhs, sys.K * (1.0 + xn * xn),
                   "x=" + detail::fmt_vec(a[0]) + " u=" + detail::fmt_vec(a[1]) + " w=" + detail::fmt_vec(a[2]));
    // random partner, and a partner that differs only in x
    const auto &b = pts[std::uniform_int_distribution<std::size_t>(0, pts.size() - 1)(rng)];
    check_pair(a, b);
    check_pair(a, {b[0], a[1], a[2]});
  }
  return rep;
}

} // namespace stochabs

#endif /* STOCHABS_SYSTEM_HPP_ */
