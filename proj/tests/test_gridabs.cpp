#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <stochabs/abstraction.hpp>

using namespace stochabs;

namespace {

SysModel load(const char *name) { return std::get<SysModel>(load_model(std::string(STOCHABS_MODELS) + "/" + name)); }

SysModel one_dim(const std::string &drift, double lo = -1, double hi = 1) {
  char head[200];
  std::snprintf(head, sizeof head, "system t\ndims n=1 m=1 p=0 r=0\ndomain x1 in [%g, %g]\ninput u1 in [-1, 1]\n", lo, hi);
  return parse_system_text(std::string(head) + "drift x1' = " + drift + "\nconst Lf=1 Lsigma=0 K=1\n");
}

/// Plain RK4 with a fixed step count, separate from the library integrator.
Vec rk4_reference(const SysModel &s, Vec x, std::span<const double> u, std::span<const double> w, double tau, int steps) {
  const std::size_t n = x.size();
  const double h = tau / steps;
  for (int k = 0; k < steps; ++k) {
    Vec k1 = s.drift_at(x, u, w), y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h / 2 * k1[i];
    Vec k2 = s.drift_at(y, u, w);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h / 2 * k2[i];
    Vec k3 = s.drift_at(y, u, w);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * k3[i];
    Vec k4 = s.drift_at(y, u, w);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

/// Successor lists by linear scan of all states around a 10x finer integration.
void expect_matches_brute_force(const SysModel &s, const FiniteAbstraction &a) {
  for (const Transition &t : a.transitions) {
    auto x0 = a.states.at(t.state);
    Vec end = rk4_reference(s, Vec(x0.begin(), x0.end()), a.inputs.at(t.input), a.dists.at(t.dist), a.tau, 160);
    std::vector<std::uint32_t> want;
    for (std::size_t k = 0; k < a.n_states(); ++k) {
      bool ok = true;
      for (int i = 0; i < s.n; ++i) ok = ok && std::abs(a.states.at(k)[std::size_t(i)] - end[std::size_t(i)]) <= a.eta[std::size_t(i)] + 1e-9;
      if (ok) want.push_back(std::uint32_t(k));
    }
    EXPECT_EQ(t.succ, want) << "state " << t.state << " input " << t.input << " dist " << t.dist;
  }
}

} // namespace

TEST(Gridabs, QuantizeExamples) {
  EXPECT_EQ(quantize(Vec{0.35}, 0.25)[0], 0.5);
  EXPECT_EQ(quantize(Vec{0.0}, 0.25)[0], 0.0);
  EXPECT_EQ(quantize(Vec{0.25}, 0.25)[0], 0.5);
  EXPECT_EQ(quantize(Vec{-0.25}, 0.25)[0], 0.0);
  EXPECT_EQ(quantize(Vec{-0.26}, 0.25)[0], -0.5);
  Vec q = quantize(Vec{0.31, -0.07}, Vec{0.1, 0.05});
  EXPECT_NEAR(q[0], 0.4, 1e-15);
  EXPECT_NEAR(q[1], -0.1, 1e-15);
}

TEST(Gridabs, CoverProperty) {
  std::mt19937_64 rng(3);
  Box D{{-1.0, -0.5}, {1.0, 0.7}};
  Vec eta{0.25, 0.1};
  Grid g = Grid::state_grid(D, eta);
  for (int k = 0; k < 10000; ++k) {
    Vec x = D.sample(rng);
    Vec q = quantize(x, eta);
    Vec nearest = g.point(g.nearest(x));
    for (int i = 0; i < 2; ++i) {
      EXPECT_LE(std::abs(q[std::size_t(i)] - x[std::size_t(i)]), eta[std::size_t(i)]);
      EXPECT_LE(std::abs(nearest[std::size_t(i)] - x[std::size_t(i)]), eta[std::size_t(i)] + kGeomSlack);
    }
  }
}

TEST(Gridabs, GridCountClosedForm) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lo(-3.0, 0.0), w(0.1, 4.0), e(0.01, 0.5);
  for (int k = 0; k < 200; ++k) {
    Box b{{lo(rng), lo(rng)}, {}};
    b.hi = {b.lo[0] + w(rng), b.lo[1] + w(rng)};
    Vec eta{e(rng), e(rng)};
    std::uint64_t want = 1;
    for (int a = 0; a < 2; ++a) {
      long c = long(std::floor(b.hi[std::size_t(a)] / (2 * eta[std::size_t(a)]))) -
               long(std::ceil(b.lo[std::size_t(a)] / (2 * eta[std::size_t(a)]))) + 1;
      want *= std::uint64_t(std::max(c, 0L));
    }
    Grid g = Grid::state_grid(b, eta);
    EXPECT_EQ(g.size(), want);
    EXPECT_EQ(g.points().size(), want);
  }
  Grid g = Grid::state_grid(Box{{-1, -1}, {1, 1}}, {0.25, 0.1});
  EXPECT_EQ(g.axis_count(0), 5u);
  EXPECT_EQ(g.axis_count(1), 11u);
  EXPECT_EQ(g.size(), 55u);
  // lexicographic, axis 0 most significant
  EXPECT_EQ(g.point(0), (Vec{-1.0, -1.0}));
  EXPECT_NEAR(g.point(1)[1], -0.8, 1e-15);
  EXPECT_EQ(g.point(11)[0], -0.5);
}

TEST(Gridabs, InputGridCenteredAndSnapped) {
  Grid ig = Grid::input_grid(Box{{-0.1}, {0.1}}, {0.05});
  ASSERT_EQ(ig.size(), 3u);
  EXPECT_NEAR(ig.point(0)[0], -0.1, 1e-15);
  EXPECT_EQ(ig.point(1)[0], 0.0);
  EXPECT_TRUE(ig.covers_box());
  EXPECT_EQ(Grid::input_grid(Box{{-0.1}, {0.1}}, {0.1}).size(), 1u);
  double om = snap_input_spacing(0.0, 1.0, 0.3);
  EXPECT_LE(om, 0.3);
  EXPECT_TRUE(Grid::input_grid(Box{{0.0}, {1.0}}, {om}).covers_box());
  double eta = snap_state_spacing(-1.0, 0.6, 0.3);
  EXPECT_LE(eta, 0.3);
  EXPECT_GT(eta, 0.0);
  EXPECT_TRUE(Grid::state_grid(Box{{-1.0}, {0.6}}, {eta}).covers_box());
}

TEST(Gridabs, FlowClosedForms) {
  FlowOptions fo;
  fo.tolerance = 1e-12;
  SysModel decay = one_dim("-x1");
  Vec zero{0.0};
  EXPECT_NEAR(flow_nominal(decay, Vec{1.0}, zero, {}, 1.0, fo).x[0], std::exp(-1.0), 1e-9);
  SysModel still = one_dim("0");
  EXPECT_EQ(flow_nominal(still, Vec{0.3}, zero, {}, 1.0, fo).x[0], 0.3);
  SysModel driven = one_dim("-x1 + u1");
  EXPECT_NEAR(flow_nominal(driven, Vec{0.0}, Vec{1.0}, {}, 1.0, fo).x[0], 1 - std::exp(-1.0), 1e-9);
}

TEST(Gridabs, FlowErrorsAndDomainExit) {
  SysModel decay = one_dim("-x1");
  FlowOptions tight;
  tight.substeps = 1;
  tight.max_substeps = 2;
  tight.tolerance = 1e-15;
  EXPECT_THROW(flow_nominal(decay, Vec{1.0}, Vec{0.0}, {}, 1.0, tight), IntegrationError);

  SysModel fast = one_dim("5");
  FlowResult r = flow_nominal(fast, Vec{0.0}, Vec{0.0}, {}, 1.0);
  EXPECT_TRUE(r.out_of_domain);
  FlowResult ok = flow_nominal(decay, Vec{1.0}, Vec{0.0}, {}, 1.0);
  EXPECT_FALSE(ok.out_of_domain);
  EXPECT_GE(tight.substeps, 1);
}

TEST(Gridabs, ScalarEquilibriumTransition) {
  SysModel s = load("scalar.sys");
  FiniteAbstraction a = build_abstraction(s, 0.5, {0.25}, {0.1}, zero_disturbance(1));
  ASSERT_EQ(a.n_states(), 5u);
  ASSERT_EQ(a.n_inputs(), 1u);
  ASSERT_EQ(a.n_dists(), 1u);
  EXPECT_EQ(a.states.at(2)[0], 0.0);
  EXPECT_EQ(a.at(2, 0, 0).succ, (std::vector<std::uint32_t>{2}));
}

TEST(Gridabs, TiedEndpointKeepsBothNeighbours) {
  Grid g = Grid::state_grid(Box{{-1}, {1}}, {0.25});
  EXPECT_EQ(g.within(Vec{0.25}, Vec{0.25}), (std::vector<std::uint32_t>{2, 3}));
  SysModel s = one_dim("0.25");
  FiniteAbstraction a = build_abstraction(s, 1.0, {0.25}, {1.0}, zero_disturbance(0));
  EXPECT_EQ(a.at(2, 0, 0).succ, (std::vector<std::uint32_t>{2, 3}));
}

TEST(Gridabs, ScalarTableMatchesBruteForce) {
  SysModel s = load("scalar.sys");
  PointSet w;
  w.dim = 1;
  for (double v : {-1.0, -0.5, 0.0, 0.5, 1.0}) w.push(Vec{v});
  FiniteAbstraction a = build_abstraction(s, 0.5, {0.25}, {0.05}, w);
  EXPECT_EQ(a.transitions.size(), 5u * 3u * 5u);
  expect_matches_brute_force(s, a);
  FiniteAbstraction b = build_abstraction(s, 0.5, {0.1}, {0.05}, zero_disturbance(1));
  expect_matches_brute_force(s, b);
}

TEST(Gridabs, PlanarSuccessorCounts) {
  SysModel s = load("planar.sys");
  FiniteAbstraction a = build_abstraction(s, 0.3, {0.125, 0.1}, {0.1}, zero_disturbance(0));
  auto st = successor_stats(a);
  EXPECT_GT(st.in_domain, 0u);
  EXPECT_GE(st.min_in_domain, 1u);
  EXPECT_LE(st.max_in_domain, 4u);
  expect_matches_brute_force(s, a);
}

TEST(Gridabs, OutOfDomainTransitionsFlagged) {
  SysModel s = one_dim("0.5 + 0 * x1");
  FiniteAbstraction a = build_abstraction(s, 1.0, {0.25}, {1.0}, zero_disturbance(0));
  // 1 -> 1.5 leaves D; 0.5 -> 1.0 stays on the boundary
  EXPECT_TRUE(a.at(4, 0, 0).out_of_domain);
  EXPECT_TRUE(a.at(4, 0, 0).succ.empty());
  EXPECT_FALSE(a.at(3, 0, 0).out_of_domain);
  EXPECT_EQ(a.at(3, 0, 0).succ, (std::vector<std::uint32_t>{4}));
  auto text = serialize(a);
  EXPECT_NE(text.find("4 0 0 -> oob\n"), std::string::npos);
  EXPECT_EQ(deserialize(text), a);
}

TEST(Gridabs, SizeCapChecked) {
  SysModel s = load("planar.sys");
  BuildOptions bo;
  bo.max_cells = 100;
  try {
    build_abstraction(s, 0.3, {0.01, 0.01}, {0.1}, zero_disturbance(0), bo);
    FAIL();
  } catch (const SizeError &e) {
    EXPECT_NE(std::string(e.what()).find("30603"), std::string::npos) << e.what();
  }
}

TEST(Gridabs, SerializationRoundTrip) {
  SysModel s = load("scalar.sys");
  BuildOptions bo;
  bo.eps = 3.5;
  bo.eps_tilde = {0.25};
  FiniteAbstraction a = build_abstraction(s, 0.5, {0.25}, {0.05}, zero_disturbance(1), bo);
  std::string text = serialize(a);
  EXPECT_TRUE(text.starts_with("STOCHABS v1\nsystem scalar\ntau 0.5 eta 0.25 omega 0.050000000000000003 eps 3.5\n"));
  FiniteAbstraction b = deserialize(text);
  EXPECT_EQ(a, b);
  EXPECT_EQ(b.hash, a.hash);
  EXPECT_EQ(serialize(b), text);
}

TEST(Gridabs, FlippedByteIsHashMismatch) {
  SysModel s = load("scalar.sys");
  std::string text = serialize(build_abstraction(s, 0.5, {0.25}, {0.05}, zero_disturbance(1)));
  const std::size_t body_end = text.rfind("\nhash ");
  for (std::size_t pos : {std::size_t(14), std::size_t(40), body_end / 2, body_end - 2}) {
    std::string bad = text;
    bad[pos] ^= 0x01;
    EXPECT_THROW(deserialize(bad), HashMismatch) << pos;
  }
  std::string v2 = text;
  v2.replace(0, 11, "STOCHABS v2");
  EXPECT_THROW(deserialize(v2), VersionMismatch);
  EXPECT_THROW(deserialize("garbage\n"), FormatError);
  EXPECT_THROW(deserialize(text.substr(0, body_end + 1)), FormatError);
}

TEST(Gridabs, EmptyAbstraction) {
  FiniteAbstraction a;
  a.system = "empty";
  a.tau = 1;
  a.eta = {0.5};
  a.omega = {0.5};
  a.states.dim = 1;
  a.inputs.dim = 1;
  a.inputs.push(Vec{0.0});
  a.dists.dim = 0;
  a.dists.push({});
  seal(a);
  std::string text = serialize(a);
  EXPECT_NE(text.find("states 0\n"), std::string::npos);
  EXPECT_NE(text.find("transitions 0\nhash "), std::string::npos);
  EXPECT_EQ(deserialize(text), a);
}

TEST(Gridabs, DeterministicAcrossWorkers) {
  SysModel s = load("planar.sys");
  std::string ref;
  for (unsigned w : {1u, 2u, 8u}) {
    BuildOptions bo;
    bo.workers = w;
    std::string text = serialize(build_abstraction(s, 0.3, {0.125, 0.1}, {0.1}, zero_disturbance(0), bo));
    if (ref.empty())
      ref = text;
    else
      EXPECT_EQ(text, ref) << w << " workers";
  }
  BuildOptions bo;
  EXPECT_EQ(serialize(build_abstraction(s, 0.3, {0.125, 0.1}, {0.1}, zero_disturbance(0), bo)), ref);
}
