// stochabs command-line front end.
//
// Exit status: 0 all checks pass, 1 analysis negative (infeasible, refuted,
// rejected), 2 usage or I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <stochabs/stochabs.hpp>

namespace fs = std::filesystem;
using namespace stochabs;

namespace {

enum Exit { kPass = 0, kNegative = 1, kUsage = 2 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  std::uint64_t seed = kDefaultSeed;
  std::size_t paths = 10000;
  unsigned workers = 1;
  std::string out = ".";
  std::uint64_t max_cells = 50'000'000;
  bool force = false;

  std::string model;
  std::vector<std::string> files;
  double tau = 0.0;
  double eps = 0.0;
  double eps_tilde = 0.0;
  double psi = 0.0;
  double omega = -1.0;
  double eta = -1.0;
  double eta_floor = 1e-6;
  std::string mode = "auto";
  std::size_t samples = 10000;
  std::string relation;
  std::vector<std::string> nodes;
  std::size_t pairs = 100;
  std::size_t pair_paths = 100;
  int steps = 2048;
};

std::string fmt(double v) { return expr::format_real(v); }

void write_text(const fs::path &p, const std::string &text) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw UsageError("cannot write " + p.string());
  f << text;
  if (!f) throw UsageError("cannot write " + p.string());
}

SysModel load_system(const std::string &path) {
  auto m = load_model(path);
  if (!std::holds_alternative<SysModel>(m)) throw UsageError(path + " is a network; a single system is required");
  return std::get<SysModel>(std::move(m));
}

double effective_tau(const Config &c, const NetworkSpec *net) {
  if (c.tau > 0.0) return c.tau;
  if (net) return net->tau;
  throw UsageError("--tau is required");
}

BoundKit kit_for(const SysModel &sys, QuadraticCertificate *out = nullptr) {
  if (!sys.cert) throw UsageError("system " + sys.name + " declares no certificate (add a 'cert' line)");
  auto cert = QuadraticCertificate::from_system(sys);
  if (out) *out = cert;
  return derive_bounds(sys, cert);
}

void print_terms(const EtaBoundTerms &t) {
  std::cout << "  alpha_high^-1(alpha_low(eps^2))          = " << fmt(t.alpha_term) << "\n"
            << "  (1-e^{-kappa tau}) alpha_low(eps^2)      = " << fmt(t.contraction) << "\n"
            << "  sigma_u(omega)/(e kappa)                 = " << fmt(t.input_term) << "\n"
            << "  sigma_d(psi+|eps~|)/(e kappa)            = " << fmt(t.dist_term) << "\n"
            << "  gamma_hat argument                       = " << fmt(t.gamma_arg) << "\n"
            << "  gamma_hat^-1(argument)                   = " << fmt(t.gamma_inv) << "\n"
            << "  h(tau)^{1/2}                             = " << fmt(t.sqrt_h) << "\n"
            << "  eta upper bound                          = " << fmt(t.bound) << "\n"
            << "  limiting term: " << t.limiting_term() << "\n";
}

void print_node(const NodeParams &np) {
  std::cout << "node " << np.name << ": " << (np.feasible ? "feasible" : "infeasible") << "\n"
            << "  eps = " << fmt(np.eps) << ", eps lower bound = " << fmt(np.eps_lower) << ", psi(tau) = " << fmt(np.psi)
            << "\n  eps~ =";
  if (np.eps_tilde.empty()) std::cout << " (empty)";
  for (double e : np.eps_tilde) std::cout << " " << fmt(e);
  std::cout << "\n";
  if (!np.reason.empty()) std::cout << "  violated: " << np.reason << "\n";
  print_terms(np.terms);
  if (np.feasible) {
    std::cout << "  eta =";
    for (double e : np.eta) std::cout << " " << fmt(e);
    std::cout << "\n  omega =";
    for (double o : np.omega) std::cout << " " << fmt(o);
    std::cout << "\n";
  }
}

/// Parameters for a standalone system: synthesized, or given and checked.
NodeParams standalone_params(const Config &c, const SysModel &sys, double tau) {
  if (!(c.eps > 0.0)) throw UsageError("--eps must be positive");
  SynthOptions so;
  so.eta_floor = c.eta_floor;
  so.seed = c.seed;
  DisturbanceTerms dt{c.psi, c.eps_tilde};
  NodeParams np = synthesize_node(sys, tau, c.eps, dt, so);
  if (c.eta < 0.0 && c.omega < 0.0) return np;

  // explicit spacings
  BoundKit kit = kit_for(sys);
  NodeParams given = np;
  double om = c.omega >= 0.0 ? c.omega : (np.feasible ? *std::max_element(np.omega.begin(), np.omega.end()) : 0.0);
  if (sys.m == 0) om = 0.0;
  given.omega.assign(std::size_t(sys.m), om);
  given.omega_scalar = om;
  given.terms = eta_bound_terms(kit, sys, tau, c.eps, om, dt);
  given.eta_bound = given.terms.bound;
  double eta = c.eta >= 0.0 ? c.eta : std::min(given.eta_bound, c.eps);
  given.eta.assign(std::size_t(sys.n), eta);
  given.feasible = c.eps > given.eps_lower && eta <= given.eta_bound && eta <= c.eps && eta > 0.0;
  given.reason.clear();
  if (!given.feasible) {
    if (!(c.eps > given.eps_lower))
      given.reason = "eps lower-bound inequality: eps = " + fmt(c.eps) + " is not above " + fmt(given.eps_lower);
    else if (eta > c.eps)
      given.reason = "eta " + fmt(eta) + " exceeds eps";
    else
      given.reason = "eta upper-bound inequality: eta = " + fmt(eta) + " is above " + fmt(given.eta_bound) +
                     "; limiting term: " + given.terms.limiting_term();
  }
  return given;
}

Grid checked_state_grid(const SysModel &sys, const Vec &eta, bool force) {
  Grid g = Grid::state_grid(sys.domain, eta);
  if (!g.covers_box()) {
    if (!force) throw UsageError("state grid with eta " + fmt(eta[0]) + " does not cover the domain (use --force)");
    std::cerr << "warning: state grid does not cover the domain\n";
  }
  return g;
}

FiniteAbstraction abstract_system(const Config &c, const SysModel &sys, const NodeParams &np, double tau) {
  if (!np.feasible) std::cerr << "warning: building with unvalidated parameters: " << np.reason << "\n";
  checked_state_grid(sys, np.eta, c.force);
  Grid ig = Grid::input_grid(sys.input, np.omega);
  if (!ig.covers_box()) {
    if (!c.force) throw UsageError("input grid does not cover the input box (use --force)");
    std::cerr << "warning: input grid does not cover the input box\n";
  }
  BuildOptions bo;
  bo.workers = c.workers;
  bo.max_cells = c.max_cells;
  bo.eps = c.eps;
  if (sys.p > 0) {
    bo.blocks = {sys.p};
    bo.eps_tilde = {c.eps_tilde};
  }
  return build_abstraction(sys, tau, np.eta, np.omega, zero_disturbance(sys.p), bo);
}

/// Builds every node abstraction of a network from synthesized parameters.
std::vector<FiniteAbstraction> abstract_network(const Config &c, const NetworkSpec &net, SynthesisResult &sr) {
  SynthOptions so;
  so.eta_floor = c.eta_floor;
  so.seed = c.seed;
  sr = synthesize_params(net, so);
  for (const auto &np : sr.nodes) print_node(np);
  if (!sr.feasible && !c.force) return {};
  std::vector<Vec> eta;
  for (const auto &np : sr.nodes) eta.push_back(np.eta);
  Vec eps;
  for (const auto &nd : net.nodes) eps.push_back(nd.eps);
  std::vector<FiniteAbstraction> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto &sys = net.nodes[i].sys;
    const auto &np = sr.nodes[i];
    if (np.eta.empty()) throw UsageError("node " + np.name + " has no usable eta");
    BuildOptions bo;
    bo.workers = c.workers;
    bo.max_cells = c.max_cells;
    bo.eps = net.nodes[i].eps;
    bo.blocks = disturbance_blocks(net, int(i));
    bo.eps_tilde = eps_tilde(net, int(i), eps, eta);
    out.push_back(build_abstraction(sys, net.tau, np.eta, np.omega, build_Wtilde(net, int(i), eta, c.max_cells), bo));
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_lint(const Config &c) {
  auto m = load_model(c.model);
  bool ok = true;
  auto lint_sys = [&](const SysModel &s, const std::string &label) {
    auto rep = check_regularity(s, c.samples, c.seed);
    std::cout << label << ": n=" << s.n << " m=" << s.m << " p=" << s.p << " r=" << s.r << "\n";
    auto line = [&](const char *what, const RegularityCheck &ck) {
      std::cout << "  " << what << ": " << (ck.pass ? "ok" : "REFUTED") << " (worst ratio " << fmt(ck.worst_ratio) << ")";
      if (!ck.pass) std::cout << " at " << ck.witness;
      std::cout << "\n";
    };
    line("Lipschitz f", rep.lipschitz_f);
    line("Lipschitz sigma", rep.lipschitz_sigma);
    line("linear growth", rep.growth);
    std::cout << "  origin equilibrium: " << (s.origin_is_equilibrium() ? "yes" : "no") << "\n";
    std::cout << "  certificate: " << (s.cert ? "declared" : "none") << "\n";
    ok = ok && rep.pass();
  };
  if (auto *s = std::get_if<SysModel>(&m)) {
    lint_sys(*s, "system " + s->name);
  } else {
    const auto &net = std::get<NetworkSpec>(m);
    std::cout << "network: " << net.size() << " nodes, " << net.edges.size() << " edges, tau=" << fmt(net.tau) << "\n";
    for (const auto &nd : net.nodes) lint_sys(nd.sys, "node " + nd.name);
  }
  std::cout << (ok ? "lint: ok\n" : "lint: declared constants refuted\n");
  return ok ? kPass : kNegative;
}

int cmd_certify(const Config &c) {
  auto m = load_model(c.model);
  std::vector<const SysModel *> systems;
  if (auto *s = std::get_if<SysModel>(&m))
    systems.push_back(s);
  else
    for (const auto &nd : std::get<NetworkSpec>(m).nodes) systems.push_back(&nd.sys);
  bool ok = true;
  for (const SysModel *s : systems) {
    QuadraticCertificate cert;
    BoundKit kit = kit_for(*s, &cert);
    CertificateReport rep;
    if (c.mode == "auto")
      rep = check_declared_certificate(*s, cert, c.samples, c.seed);
    else
      rep = verify_certificate(*s, cert, c.mode == "linear" ? VerifyMode::LinearExact : VerifyMode::Sampled, c.samples,
                               c.seed);
    std::cout << "system " << s->name << ": certificate " << (rep.accepted ? "accepted" : "REJECTED") << "\n"
              << "  " << rep.detail << "\n"
              << "  kappa = " << fmt(cert.kappa) << ", lambda_min = " << fmt(cert.lambda_min)
              << ", lambda_max = " << fmt(cert.lambda_max) << ", ||sqrt P||_inf = " << fmt(cert.sqrtP_infnorm) << "\n"
              << "  alpha_low(r)  = " << kit.alpha_low.to_string() << "\n"
              << "  alpha_high(r) = " << kit.alpha_high.to_string() << "\n"
              << "  sigma_u(r)    = " << kit.sigma_u.to_string() << "\n"
              << "  sigma_d(r)    = " << kit.sigma_d.to_string() << "\n"
              << "  gamma_hat(r)  = " << kit.gamma_hat.to_string() << "\n"
              << "  rho_u(r)      = " << kit.rho_u.to_string() << "\n"
              << "  rho_d(r)      = " << kit.rho_d.to_string() << "\n"
              << "  beta(r,s)     = " << kit.beta.base().to_string() << " * exp(-" << fmt(kit.beta.decay()) << " s)\n";
    ok = ok && rep.accepted;
  }
  return ok ? kPass : kNegative;
}

int cmd_params(const Config &c) {
  auto m = load_model(c.model);
  if (auto *net = std::get_if<NetworkSpec>(&m)) {
    SynthOptions so;
    so.eta_floor = c.eta_floor;
    so.seed = c.seed;
    auto sr = synthesize_params(*net, so);
    for (const auto &np : sr.nodes) print_node(np);
    std::cout << (sr.feasible ? "network: feasible\n" : "network: infeasible\n");
    return sr.feasible ? kPass : kNegative;
  }
  const auto &sys = std::get<SysModel>(m);
  double tau = effective_tau(c, nullptr);
  NodeParams np = standalone_params(c, sys, tau);
  print_node(np);
  return np.feasible ? kPass : kNegative;
}

int cmd_abstract(const Config &c) {
  auto m = load_model(c.model);
  fs::path out(c.out);
  if (auto *net = std::get_if<NetworkSpec>(&m)) {
    SynthesisResult sr;
    auto abs = abstract_network(c, *net, sr);
    if (abs.empty()) return kNegative;
    for (const auto &a : abs) {
      write_text(out / (a.system + ".abs"), serialize(a));
      std::cout << "wrote " << (out / (a.system + ".abs")).string() << " (" << a.n_states() << " states, hash " << a.hash
                << ")\n";
    }
    return sr.feasible ? kPass : kNegative;
  }
  const auto &sys = std::get<SysModel>(m);
  double tau = effective_tau(c, nullptr);
  NodeParams np = standalone_params(c, sys, tau);
  print_node(np);
  if (!np.feasible && !c.force) {
    std::cout << "not building: parameters violate the quantization condition (use --force)\n";
    return kNegative;
  }
  auto a = abstract_system(c, sys, np, tau);
  auto st = successor_stats(a);
  write_text(out / (a.system + ".abs"), serialize(a));
  std::cout << "wrote " << (out / (a.system + ".abs")).string() << " (" << a.n_states() << " states, "
            << a.n_inputs() << " inputs, " << a.transitions.size() << " transitions, successors "
            << st.min_in_domain << ".." << st.max_in_domain << ", " << st.out_of_domain << " out of domain, hash "
            << a.hash << ")\n";
  return np.feasible ? kPass : kNegative;
}

int cmd_compose(const Config &c) {
  auto m = load_model(c.model);
  auto *net = std::get_if<NetworkSpec>(&m);
  if (!net) throw UsageError("compose needs a network file");
  std::vector<int> set;
  if (c.nodes.empty())
    for (std::size_t i = 0; i < net->size(); ++i) set.push_back(int(i));
  for (const auto &name : c.nodes) {
    auto it = std::find_if(net->nodes.begin(), net->nodes.end(), [&](const NetworkNode &nd) { return nd.name == name; });
    if (it == net->nodes.end()) throw UsageError("unknown node '" + name + "'");
    set.push_back(int(it - net->nodes.begin()));
  }
  SynthesisResult sr;
  auto abs = abstract_network(c, *net, sr);
  if (abs.empty()) return kNegative;
  auto comp = compose_abstractions(abs, *net, set, c.max_cells, c.workers);
  Vec eps;
  for (const auto &nd : net->nodes) eps.push_back(nd.eps);
  auto cp = composed_relation_params(eps, *net, set);
  fs::path p = fs::path(c.out) / (comp.system + ".abs");
  write_text(p, serialize(comp));
  std::cout << "composed " << comp.system << ": " << comp.n_states() << " states, " << comp.n_inputs() << " inputs, "
            << comp.n_dists() << " disturbance symbols\n"
            << "eps = " << fmt(cp.eps) << "\neps~ =";
  if (cp.eps_tilde.empty()) std::cout << " (empty)";
  for (double e : cp.eps_tilde) std::cout << " " << fmt(e);
  std::cout << "\nwrote " << p.string() << " (hash " << comp.hash << ")\n";
  return sr.feasible ? kPass : kNegative;
}

int cmd_bisim(const Config &c) {
  if (c.files.size() != 2) throw UsageError("bisim needs two abstraction files");
  auto a = deserialize(read_file(c.files[0]));
  auto b = deserialize(read_file(c.files[1]));
  if (!c.relation.empty()) {
    auto rf = deserialize_relation(read_file(c.relation));
    if (rf.hash1 != a.hash || rf.hash2 != b.hash) throw UsageError("relation file was made for different abstractions");
    auto v = check_relation(a, b, rf.table);
    if (v.valid) {
      std::cout << "relation valid (" << rf.table.pairs.size() << " pairs)\n";
      return kPass;
    }
    std::cout << "relation refuted at pair (" << v.x1 << ", " << v.x2 << "), condition (" << v.clause << "): " << v.detail
              << "\n";
    return kNegative;
  }
  double eps = c.eps > 0.0 ? c.eps : std::max(a.eps, b.eps);
  Vec et = a.eps_tilde;
  if (c.eps_tilde > 0.0) et.assign(a.blocks.size(), c.eps_tilde);
  BisimOptions bo;
  bo.workers = c.workers;
  bo.max_pairs = c.max_cells;
  auto R = largest_bisimulation(a, b, eps, et, bo);
  fs::path p = fs::path(c.out) / "relation.rel";
  write_text(p, serialize_relation(R, a.hash, b.hash));
  std::cout << "largest bisimulation: " << R.pairs.size() << " pairs (eps = " << fmt(eps) << ")\nwrote " << p.string()
            << "\n";
  return R.pairs.empty() ? kNegative : kPass;
}

int cmd_validate(const Config &c) {
  const SysModel sys = load_system(c.model);
  double tau = effective_tau(c, nullptr);
  QuadraticCertificate cert;
  BoundKit kit = kit_for(sys, &cert);
  NodeParams np = standalone_params(c, sys, tau);
  print_node(np);
  if (!np.feasible && !c.force) {
    std::cout << "not validating: parameters violate the quantization condition (use --force)\n";
    return kNegative;
  }
  Config quiet = c;
  quiet.force = true;
  auto abs = abstract_system(quiet, sys, np, tau);

  MCOptions mo;
  mo.paths = c.paths;
  mo.seed = c.seed;
  mo.steps = c.steps;
  mo.workers = c.workers;
  Grid sg = Grid::state_grid(sys.domain, np.eta);
  Vec x0 = sg.point(sg.nearest(sys.domain.hi));
  Vec u = sys.input.hi, w = sys.dist.hi;
  std::vector<BoundReport> reps;
  reps.push_back(validate_moment_closeness(sys, kit, x0, u, w, tau, mo));
  reps.push_back(validate_increment_bound(sys, x0, u, w, tau, mo));
  IncrementalCase ic{sys.domain.hi, sys.domain.lo, sys.input.hi, sys.input.lo, sys.dist.hi, sys.dist.lo};
  reps.push_back(validate_delta_iss(sys, kit, ic, tau, mo));
  BisimStepOptions bo;
  bo.pairs = c.pairs;
  bo.paths = c.pair_paths;
  bo.seed = c.seed;
  bo.steps = c.steps;
  bo.workers = c.workers;
  bo.eps = c.eps;
  bo.eps_tilde = abs.eps_tilde;
  reps.push_back(validate_bisim_step(abs, sys, cert, kit, bo));

  std::ostringstream csv;
  write_csv(csv, reps);
  fs::path p = fs::path(c.out) / "validate.csv";
  write_text(p, csv.str());
  bool ok = true;
  for (const auto &r : reps) {
    std::size_t fails = 0;
    for (const auto &row : r.rows) fails += !row.pass;
    std::cout << r.name << ": " << (r.pass() ? "pass" : "FAIL") << " (" << r.rows.size() << " rows, " << fails
              << " failing, " << r.diverged << " diverged";
    if (r.skipped) std::cout << ", " << r.skipped << " skipped";
    std::cout << ")\n";
    ok = ok && r.pass();
  }
  std::cout << "wrote " << p.string() << "\n";
  return ok ? kPass : kNegative;
}

int cmd_report(const Config &c) {
  if (c.files.empty()) throw UsageError("report needs at least one CSV file");
  struct Tally {
    std::size_t rows = 0, fails = 0;
    double worst = -std::numeric_limits<double>::infinity();
  };
  std::map<std::string, Tally> by_check;
  std::vector<std::string> order;
  for (const auto &f : c.files) {
    std::istringstream in(read_file(f));
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw UsageError(f + ": not a validation CSV");
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> col;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) col.push_back(cell);
      if (col.size() != 7) throw UsageError(f + ":" + std::to_string(lineno) + ": expected 7 columns");
      if (!by_check.count(col[0])) order.push_back(col[0]);
      auto &t = by_check[col[0]];
      ++t.rows;
      t.fails += col[6] != "pass";
      double emp = std::stod(col[2]), se = std::stod(col[3]), bound = std::stod(col[4]);
      t.worst = std::max(t.worst, emp - bound - 3.0 * se);
    }
  }
  std::ostringstream out;
  out << "check,rows,failing,worst_excess,verdict\n";
  bool ok = true;
  for (const auto &k : order) {
    const auto &t = by_check[k];
    out << k << ',' << t.rows << ',' << t.fails << ',' << fmt(t.worst) << ',' << (t.fails ? "fail" : "pass") << '\n';
    ok = ok && t.fails == 0;
  }
  std::cout << out.str();
  write_text(fs::path(c.out) / "summary.csv", out.str());
  return ok ? kPass : kNegative;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"stochabs: finite abstractions of stochastic control systems"};
  app.name("stochabs");
  app.set_help_all_flag("--help-all", "Print help for every subcommand and exit");
  app.require_subcommand(1);
  app.fallthrough();
  Config c;
  app.add_option("--seed", c.seed, "Master seed for all randomness")->capture_default_str();
  app.add_option("--paths", c.paths, "Monte-Carlo path count")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--workers", c.workers, "Worker threads (output does not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--max-cells", c.max_cells, "Cap on abstraction cells and relation pairs")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--force", c.force, "Build with unvalidated parameters (a warning is emitted)");

  auto model_arg = [&](CLI::App *s) { s->add_option("model", c.model, "System or network file")->required(); };
  auto quant_opts = [&](CLI::App *s) {
    s->add_option("--tau", c.tau, "Sampling time (networks default to their tau line)");
    s->add_option("--eps", c.eps, "Target precision eps");
    s->add_option("--eps-tilde", c.eps_tilde, "Disturbance precision ||eps~|| for a standalone system")
        ->capture_default_str();
    s->add_option("--psi", c.psi, "psi(tau) for a standalone system")->capture_default_str();
    s->add_option("--omega", c.omega, "Input quantization (default: synthesized)");
    s->add_option("--eta", c.eta, "State quantization (default: synthesized)");
    s->add_option("--eta-floor", c.eta_floor, "Smallest eta accepted as feasible")->capture_default_str();
  };

  auto *lint = app.add_subcommand("lint", "Parse a model and test its declared constants by sampling");
  model_arg(lint);
  lint->add_option("--samples", c.samples, "Random samples")->capture_default_str();

  auto *certify = app.add_subcommand("certify", "Verify the declared certificate and print the derived bounds");
  model_arg(certify);
  certify->add_option("--mode", c.mode, "auto, linear or sampled")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "linear", "sampled"}));
  certify->add_option("--samples", c.samples, "Samples for sampled mode")->capture_default_str();

  auto *params = app.add_subcommand("params", "Quantization bounds and parameter synthesis with every term listed");
  model_arg(params);
  quant_opts(params);

  auto *abstr = app.add_subcommand("abstract", "Build and write finite abstractions");
  model_arg(abstr);
  quant_opts(abstr);

  auto *compose = app.add_subcommand("compose", "Compose node abstractions of a network");
  model_arg(compose);
  compose->add_option("--nodes", c.nodes, "Node names to compose (default: all)")->delimiter(',');
  compose->add_option("--eta-floor", c.eta_floor, "Smallest eta accepted as feasible")->capture_default_str();

  auto *bisim = app.add_subcommand("bisim", "Check a relation or compute the largest bisimulation");
  bisim->add_option("abstractions", c.files, "Two abstraction files")->required()->expected(2);
  bisim->add_option("--relation", c.relation, "Relation file to check");
  bisim->add_option("--eps", c.eps, "State precision (default: from the files)");
  bisim->add_option("--eps-tilde", c.eps_tilde, "Disturbance precision per block (default: from the files)");

  auto *validate = app.add_subcommand("validate", "Monte-Carlo checks of the moment inequalities");
  model_arg(validate);
  quant_opts(validate);
  validate->add_option("--pairs", c.pairs, "Sampled pairs for the relation step")->capture_default_str();
  validate->add_option("--pair-paths", c.pair_paths, "Paths per sampled pair")->capture_default_str();
  validate->add_option("--steps", c.steps, "Euler-Maruyama steps per tau (multiple of 4)")->capture_default_str();

  auto *report = app.add_subcommand("report", "Merge validation CSVs into a summary");
  report->add_option("csv", c.files, "CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int rc = app.exit(e);
    return rc == 0 ? kPass : kUsage;
  }

  try {
    if (*lint) return cmd_lint(c);
    if (*certify) return cmd_certify(c);
    if (*params) return cmd_params(c);
    if (*abstr) return cmd_abstract(c);
    if (*compose) return cmd_compose(c);
    if (*bisim) return cmd_bisim(c);
    if (*validate) return cmd_validate(c);
    if (*report) return cmd_report(c);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
