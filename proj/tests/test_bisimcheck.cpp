#include <functional>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <stochabs/bisim.hpp>

using namespace stochabs;

namespace {

using Pairs = std::set<std::pair<std::uint32_t, std::uint32_t>>;

/// Hand-built system on the line: successor lists per (state, input, dist).
struct Toy {
  Vec x, w;
  std::size_t ni = 1;
  std::vector<std::vector<std::uint32_t>> succ; // slot-indexed

  FiniteAbstraction build() const {
    FiniteAbstraction a;
    a.system = "toy";
    a.tau = 1;
    a.eta = {0.5};
    a.omega = {0.5};
    a.states.dim = a.inputs.dim = a.dists.dim = 1;
    for (double v : x) a.states.push(Vec{v});
    for (std::size_t k = 0; k < ni; ++k) a.inputs.push(Vec{double(k)});
    for (double v : w) a.dists.push(Vec{v});
    std::size_t slot = 0;
    for (std::size_t s = 0; s < x.size(); ++s)
      for (std::size_t i = 0; i < ni; ++i)
        for (std::size_t d = 0; d < w.size(); ++d, ++slot) {
          Transition t;
          t.state = std::uint32_t(s);
          t.input = std::uint32_t(i);
          t.dist = std::uint32_t(d);
          t.succ = succ[slot];
          a.transitions.push_back(t);
        }
    seal(a);
    return a;
  }
};

Toy random_toy(std::mt19937_64 &rng, std::size_t n, double offset) {
  std::uniform_int_distribution<int> ni(1, 2), nw(1, 2), bit(0, 1);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  Toy t;
  for (std::size_t k = 0; k < n; ++k) t.x.push_back(offset + 0.5 * double(k) + 0.3 * pos(rng));
  t.ni = std::size_t(ni(rng));
  int m = nw(rng);
  for (int k = 0; k < m; ++k) t.w.push_back(0.4 * k);
  for (std::size_t s = 0; s < n * t.ni * t.w.size(); ++s) {
    std::vector<std::uint32_t> l;
    for (std::uint32_t y = 0; y < n; ++y)
      if (bit(rng)) l.push_back(y);
    if (l.empty()) l.push_back(std::uint32_t(s % n));
    t.succ.push_back(l);
  }
  return t;
}

/// Direct reading of the definition: a witness map g from challenger inputs to responder inputs must exist.
bool transfers(const Toy &c, const Toy &r, std::size_t x1, std::size_t x2, double et,
               const std::function<bool(std::uint32_t, std::uint32_t)> &rel) {
  std::size_t maps = 1;
  for (std::size_t k = 0; k < c.ni; ++k) maps *= r.ni;
  for (std::size_t code = 0; code < maps; ++code) {
    std::vector<std::size_t> g(c.ni);
    for (std::size_t k = 0, v = code; k < c.ni; ++k, v /= r.ni) g[k] = v % r.ni;
    bool ok = true;
    for (std::size_t mu = 0; mu < c.ni && ok; ++mu)
      for (std::size_t d1 = 0; d1 < c.w.size() && ok; ++d1)
        for (std::size_t d2 = 0; d2 < r.w.size() && ok; ++d2) {
          if (std::abs(c.w[d1] - r.w[d2]) > et + 1e-12) continue;
          for (auto y1 : c.succ[(x1 * c.ni + mu) * c.w.size() + d1]) {
            bool hit = false;
            for (auto y2 : r.succ[(x2 * r.ni + g[mu]) * r.w.size() + d2]) hit = hit || rel(y1, y2);
            ok = ok && hit;
          }
        }
    if (ok) return true;
  }
  return false;
}

bool oracle_valid(const Toy &s1, const Toy &s2, const Pairs &R, double eps, double et) {
  for (auto [a, b] : R) {
    if (std::abs(s1.x[a] - s2.x[b]) > eps + 1e-12) return false;
    if (!transfers(s1, s2, a, b, et, [&](auto y1, auto y2) { return R.count({y1, y2}) > 0; })) return false;
    if (!transfers(s2, s1, b, a, et, [&](auto y2, auto y1) { return R.count({y1, y2}) > 0; })) return false;
  }
  return true;
}

/// Union of every valid relation among the distance-admissible pairs.
Pairs oracle_largest(const Toy &s1, const Toy &s2, double eps, double et) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cand;
  for (std::uint32_t a = 0; a < s1.x.size(); ++a)
    for (std::uint32_t b = 0; b < s2.x.size(); ++b)
      if (std::abs(s1.x[a] - s2.x[b]) <= eps + 1e-12) cand.emplace_back(a, b);
  Pairs out;
  for (std::uint32_t mask = 0; mask < (1u << cand.size()); ++mask) {
    Pairs R;
    for (std::size_t k = 0; k < cand.size(); ++k)
      if (mask >> k & 1) R.insert(cand[k]);
    if (oracle_valid(s1, s2, R, eps, et)) out.insert(R.begin(), R.end());
  }
  return out;
}

Pairs as_set(const RelationTable &R) { return Pairs(R.pairs.begin(), R.pairs.end()); }

RelationTable table(const Pairs &p, double eps, Vec et) {
  RelationTable R;
  R.pairs.assign(p.begin(), p.end());
  R.eps = eps;
  R.eps_tilde = std::move(et);
  return R;
}

FiniteAbstraction scalar(double eta, double omega) {
  SysModel s = std::get<SysModel>(load_model(std::string(STOCHABS_MODELS) + "/scalar.sys"));
  return build_abstraction(s, 0.5, {eta}, {omega}, zero_disturbance(1));
}

} // namespace

TEST(Bisim, IdentityOnItself) {
  FiniteAbstraction a = scalar(0.25, 0.05);
  RelationTable R;
  R.eps_tilde = {0.0};
  for (std::uint32_t k = 0; k < a.n_states(); ++k) R.pairs.emplace_back(k, k);
  EXPECT_TRUE(check_relation(a, a, R).valid);
  RelationTable L = largest_bisimulation(a, a, 0.0, {0.0});
  for (std::uint32_t k = 0; k < a.n_states(); ++k) EXPECT_TRUE(L.contains(k, k));
}

TEST(Bisim, EmptyRelationVacuouslyValid) {
  FiniteAbstraction a = scalar(0.25, 0.05);
  RelationTable R;
  R.eps_tilde = {0.0};
  EXPECT_TRUE(check_relation(a, a, R).valid);
}

TEST(Bisim, SelfLoopVersusTwoCycle) {
  Toy loop{{0.0}, {0.0}, 1, {{0}}};
  Toy cyc{{0.0, 0.3}, {0.0}, 1, {{1}, {0}}};
  auto s1 = loop.build(), s2 = cyc.build();
  Pairs total{{0, 0}, {0, 1}};
  for (double eps : {1.0, 0.3, 0.2}) {
    bool want = oracle_valid(loop, cyc, total, eps, 0.0);
    EXPECT_EQ(check_relation(s1, s2, table(total, eps, {0.0})).valid, want) << eps;
    EXPECT_EQ(as_set(largest_bisimulation(s1, s2, eps, {0.0})), oracle_largest(loop, cyc, eps, 0.0)) << eps;
  }
  EXPECT_TRUE(check_relation(s1, s2, table(total, 1.0, {0.0})).valid);
  auto v = check_relation(s1, s2, table(total, 0.2, {0.0}));
  EXPECT_FALSE(v.valid);
  EXPECT_EQ(v.clause, 'a');
  EXPECT_EQ(v.x2, 1u);
  EXPECT_TRUE(largest_bisimulation(s1, s2, 0.2, {0.0}).pairs.empty());
}

TEST(Bisim, CounterexampleClauses) {
  Toy up{{0.0, 1.0}, {0.0}, 1, {{1}, {1}}};
  Toy stay{{0.0, 1.0}, {0.0}, 1, {{0}, {1}}};
  Pairs diag{{0, 0}, {1, 1}};
  auto v = check_relation(up.build(), stay.build(), table(diag, 0.5, {0.0}));
  EXPECT_FALSE(v.valid);
  EXPECT_EQ(v.clause, 'b');
  EXPECT_EQ(v.x1, 0u);
  Toy branch{{0.0, 1.0}, {0.0}, 1, {{0, 1}, {1}}};
  auto w = check_relation(up.build(), branch.build(), table(diag, 0.5, {0.0}));
  EXPECT_FALSE(w.valid);
  EXPECT_EQ(w.clause, 'c');
}

TEST(Bisim, RandomToysMatchGameTreeOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> e(0.0, 1.2), et(0.0, 0.5);
  for (int k = 0; k < 60; ++k) {
    Toy a = random_toy(rng, 2 + k % 2, 0.0), b = random_toy(rng, 2 + (k / 2) % 2, 0.1);
    double eps = e(rng), t = et(rng);
    auto s1 = a.build(), s2 = b.build();
    Pairs want = oracle_largest(a, b, eps, t);
    RelationTable got = largest_bisimulation(s1, s2, eps, {t});
    EXPECT_EQ(as_set(got), want) << "instance " << k;
    EXPECT_TRUE(check_relation(s1, s2, got).valid);
    // the full admissible set is checked against the oracle too
    Pairs all;
    for (std::uint32_t x = 0; x < a.x.size(); ++x)
      for (std::uint32_t y = 0; y < b.x.size(); ++y) all.insert({x, y});
    EXPECT_EQ(check_relation(s1, s2, table(all, eps, {t})).valid, oracle_valid(a, b, all, eps, t)) << "instance " << k;
  }
}

TEST(Bisim, DisjointRangesGiveEmptyRelation) {
  auto dyn = [](double lo, double hi) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "system d\ndims n=1 m=1 p=0 r=0\ndomain x1 in [%g, %g]\ninput u1 in [-1, 1]\n"
                  "drift x1' = 0\nconst Lf=1 Lsigma=0 K=1\n",
                  lo, hi);
    return parse_system_text(buf);
  };
  auto a = build_abstraction(dyn(-1, 1), 1, {0.25}, {1}, zero_disturbance(0));
  auto b = build_abstraction(dyn(5, 7), 1, {0.25}, {1}, zero_disturbance(0));
  EXPECT_TRUE(largest_bisimulation(a, b, 1.0, {}).pairs.empty());
  EXPECT_FALSE(largest_bisimulation(a, b, 10.0, {}).pairs.empty());
}

TEST(Bisim, CoarseVersusFineGrid) {
  FiniteAbstraction coarse = scalar(0.25, 0.1), fine = scalar(0.125, 0.1);
  RelationTable R = largest_bisimulation(coarse, fine, 3.5, {0.0});
  ASSERT_FALSE(R.pairs.empty());
  for (std::uint32_t a = 0; a < coarse.n_states(); ++a)
    for (std::uint32_t b = 0; b < fine.n_states(); ++b)
      if (inf_dist(coarse.states.at(a), fine.states.at(b)) <= 0.25) {
        EXPECT_TRUE(R.contains(a, b)) << a << " " << b;
      }
  EXPECT_TRUE(check_relation(coarse, fine, R).valid);

  RelationTable tight = largest_bisimulation(coarse, fine, 0.25, {0.0});
  EXPECT_TRUE(check_relation(coarse, fine, tight).valid);
  EXPECT_LE(tight.pairs.size(), R.pairs.size());
}

TEST(Bisim, MonotoneInParameters) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> e(0.0, 1.0), et(0.0, 0.4);
  for (int k = 0; k < 20; ++k) {
    auto s1 = random_toy(rng, 3, 0.0).build(), s2 = random_toy(rng, 4, 0.05).build();
    double eps = e(rng), t = et(rng);
    Pairs small = as_set(largest_bisimulation(s1, s2, eps, {t}));
    Pairs big_eps = as_set(largest_bisimulation(s1, s2, eps + 0.3, {t}));
    Pairs big_t = as_set(largest_bisimulation(s1, s2, eps, {t + 0.5}));
    EXPECT_TRUE(std::includes(big_eps.begin(), big_eps.end(), small.begin(), small.end())) << k;
    // larger eps~ lets the adversary pick more disturbance pairs
    Pairs tight_t = as_set(largest_bisimulation(s1, s2, eps, {0.0}));
    EXPECT_TRUE(std::includes(tight_t.begin(), tight_t.end(), small.begin(), small.end())) << k;
    EXPECT_TRUE(std::includes(small.begin(), small.end(), big_t.begin(), big_t.end())) << k;
  }
}

TEST(Bisim, TransposeSymmetry) {
  std::mt19937_64 rng(33);
  for (int k = 0; k < 20; ++k) {
    auto s1 = random_toy(rng, 3, 0.0).build(), s2 = random_toy(rng, 3, 0.2).build();
    RelationTable ab = largest_bisimulation(s1, s2, 0.8, {0.4}), ba = largest_bisimulation(s2, s1, 0.8, {0.4});
    EXPECT_EQ(transpose(ab).pairs, ba.pairs) << k;
  }
}

TEST(Bisim, InitialPairAndWorkers) {
  std::mt19937_64 rng(34);
  auto s1 = random_toy(rng, 3, 0.0).build(), s2 = random_toy(rng, 3, 0.0).build();
  RelationTable one = largest_bisimulation(s1, s2, 1.5, {0.4});
  for (unsigned w : {2u, 8u}) {
    BisimOptions o;
    o.workers = w;
    EXPECT_EQ(largest_bisimulation(s1, s2, 1.5, {0.4}, o).pairs, one.pairs);
  }
  BisimOptions o;
  o.initial = std::make_pair(0u, 0u);
  EXPECT_EQ(largest_bisimulation(s1, s2, 1.5, {0.4}, o).pairs.empty(), !one.contains(0, 0));
  o.max_pairs = 4;
  EXPECT_THROW(largest_bisimulation(s1, s2, 1.5, {0.4}, o), SizeError);
}

TEST(Bisim, IncompatibleSystems) {
  FiniteAbstraction a = scalar(0.25, 0.1);
  Toy t{{0.0}, {}, 1, {}};
  FiniteAbstraction b = t.build();
  b.dists = zero_disturbance(0);
  EXPECT_THROW(largest_bisimulation(a, b, 1, {0.0}), IncompatibleSystems);
  EXPECT_THROW(largest_bisimulation(a, a, 1, {0.0, 0.0}), IncompatibleSystems);
}

TEST(Bisim, RelationFileRoundTrip) {
  RelationTable R = table({{0, 1}, {2, 3}, {4, 0}}, 0.25, {0.5, 1e-3});
  std::string text = serialize_relation(R, "aa", "bb");
  RelationFile f = deserialize_relation(text);
  EXPECT_EQ(f.table.pairs, R.pairs);
  EXPECT_EQ(f.table.eps, R.eps);
  EXPECT_EQ(f.table.eps_tilde, R.eps_tilde);
  EXPECT_EQ(f.hash1, "aa");
  EXPECT_EQ(f.hash2, "bb");
  EXPECT_EQ(serialize_relation(f.table, f.hash1, f.hash2), text);
  EXPECT_THROW(deserialize_relation("RELATION v2\n"), VersionMismatch);
  EXPECT_THROW(deserialize_relation(text + "9 9\n"), FormatError);
  RelationTable empty = table({}, 0, {});
  EXPECT_TRUE(deserialize_relation(serialize_relation(empty, "x", "y")).table.pairs.empty());
}
