#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <stochabs/certify.hpp>
#include <stochabs/netcomp.hpp>

#include "oracles.hpp"

using namespace stochabs;

namespace {

SysModel load(const char *name) { return std::get<SysModel>(load_model(std::string(STOCHABS_MODELS) + "/" + name)); }

SysModel scalar_system(double sigma_coef, double K = 2.25) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "system s\ndims n=1 m=1 p=1 r=1\ndomain x1 in [-1, 1]\ninput u1 in [-0.1, 0.1]\n"
                "dist w1 in [-1, 1]\ndrift x1' = -x1 + u1 + w1\ndiff sigma[1][1] = %.17g * x1\n"
                "const Lf=1 Lsigma=%.17g K=%.17g\n",
                sigma_coef, std::abs(sigma_coef), K);
  return parse_system_text(buf);
}

QuadraticCertificate unit_cert(double kappa) { return QuadraticCertificate::make(Eigen::MatrixXd::Identity(1, 1), kappa, 1, 1); }

} // namespace

TEST(Certify, ScalarLinearExactThreshold) {
  SysModel s = scalar_system(0.5);
  // kappa* = 1 - c^2 / 2 with c = 0.5
  EXPECT_TRUE(verify_certificate(s, unit_cert(0.875), VerifyMode::LinearExact).accepted);
  EXPECT_FALSE(verify_certificate(s, unit_cert(0.9), VerifyMode::LinearExact).accepted);
  EXPECT_NEAR(verify_certificate(s, unit_cert(0.9), VerifyMode::LinearExact).margin, 2 * 0.025, 1e-12);
}

TEST(Certify, PureContraction) {
  SysModel s = load("scalar_det.sys");
  EXPECT_TRUE(verify_certificate(s, unit_cert(1.0), VerifyMode::LinearExact).accepted);
  EXPECT_FALSE(verify_certificate(s, unit_cert(1.01), VerifyMode::LinearExact).accepted);
}

TEST(Certify, RejectsBadP) {
  EXPECT_THROW(QuadraticCertificate::make(-Eigen::MatrixXd::Identity(1, 1), 1, 1, 1), CertificateError);
  Eigen::MatrixXd A(2, 2);
  A << 1, 0.5, 0, 1;
  EXPECT_THROW(QuadraticCertificate::make(A, 1, 1, 1), CertificateError);
  A << 1, 2, 2, 1;
  EXPECT_THROW(QuadraticCertificate::make(A, 1, 1, 1), CertificateError);
}

TEST(Certify, NonAffineDriftRejectedInExactMode) {
  SysModel s = parse_system_text("system t\ndims n=1 m=0 p=0 r=0\ndomain x1 in [-1,1]\ndrift x1' = -tanh(x1)\n"
                                 "const Lf=1 Lsigma=0 K=1\n");
  EXPECT_THROW(verify_certificate(s, unit_cert(0.1), VerifyMode::LinearExact), CertificateError);
  // -tanh has slope tanh'(1) ~ 0.42 at the domain edge
  EXPECT_TRUE(verify_certificate(s, unit_cert(0.4), VerifyMode::Sampled, 5000, 3).accepted);
  EXPECT_FALSE(verify_certificate(s, unit_cert(0.6), VerifyMode::Sampled, 5000, 3).accepted);
}

TEST(Certify, ExactAndSampledModesAgree) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(0.0, 1.2), kap(0.2, 1.2);
  for (int k = 0; k < 20; ++k) {
    double sc = c(rng), kv = kap(rng);
    double kstar = 1.0 - sc * sc / 2.0;
    if (std::abs(kv - kstar) < 0.02) continue; // sampled mode cannot resolve a razor-thin margin
    SysModel s = scalar_system(sc);
    auto exact = verify_certificate(s, unit_cert(kv), VerifyMode::LinearExact);
    auto samp = verify_certificate(s, unit_cert(kv), VerifyMode::Sampled, 2000, 9);
    EXPECT_EQ(exact.accepted, samp.accepted) << "c=" << sc << " kappa=" << kv;
  }
  SysModel pl = load("planar.sys");
  auto cert = QuadraticCertificate::from_system(pl);
  EXPECT_EQ(verify_certificate(pl, cert, VerifyMode::LinearExact).accepted,
            verify_certificate(pl, cert, VerifyMode::Sampled, 5000, 1).accepted);
}

TEST(Certify, ScalarBoundFunctions) {
  SysModel s = scalar_system(0.5);
  BoundKit kit = derive_bounds(s, unit_cert(0.875));
  for (double r : {0.0, 0.3, 1.0, 4.0}) {
    EXPECT_NEAR(kit.sigma_u(r), r * r / 0.875, 1e-15);
    EXPECT_NEAR(kit.sigma_d(r), r / 0.875, 1e-15);
    EXPECT_DOUBLE_EQ(kit.alpha_low(r), 0.5 * r);
    EXPECT_DOUBLE_EQ(kit.alpha_high(r), 0.5 * r);
    EXPECT_DOUBLE_EQ(kit.gamma_hat(r), 2 * r);
    for (double t : {0.0, 0.5, 2.0}) EXPECT_NEAR(kit.beta(r, t), r * std::exp(-0.875 * t), 1e-15);
  }
  EXPECT_EQ(kit.beta.decay(), kit.kappa);
  EXPECT_TRUE(kit.sigma_d.is_concave());
  EXPECT_TRUE(kit.gamma_hat.is_concave());
  EXPECT_TRUE(kit.alpha_low.is_convex());
  EXPECT_TRUE(kit.alpha_high.is_concave());
  EXPECT_NEAR(kit.hessian_sqrt_norm_sq, 2.0, 1e-12);
}

TEST(Certify, GammaHatBySampling) {
  SysModel s = scalar_system(0.5);
  QuadraticCertificate cert = unit_cert(0.875);
  BoundKit kit = derive_bounds(s, cert);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 10000; ++k) {
    Vec x = s.domain.sample(rng), a = s.domain.sample(rng), b = s.domain.sample(rng);
    EXPECT_LE(std::abs(cert.V(x, a) - cert.V(x, b)), kit.gamma_hat(std::abs(a[0] - b[0])) + 1e-15);
  }
}

TEST(Certify, PlanarBounds) {
  SysModel pl = load("planar.sys");
  auto cert = QuadraticCertificate::from_system(pl);
  BoundKit kit = derive_bounds(pl, cert);
  EXPECT_DOUBLE_EQ(kit.alpha_low(1.0), 0.5);
  EXPECT_DOUBLE_EQ(kit.alpha_high(1.0), 1.0);
  // sigma_u = n Lu^2 / kappa * ||sqrt P||^2 r^2 with Lu = Lf = 3
  EXPECT_NEAR(kit.sigma_u(1.0), 2 * 9 / 1.9, 1e-12);
  EXPECT_NEAR(kit.gamma_hat(1.0), 2 * 1 * 2, 1e-12);
  // ||sqrt([[I,-I],[-I,I]])||_inf^2 = (2 / sqrt 2)^2
  EXPECT_NEAR(kit.hessian_sqrt_norm_sq, 2.0, 1e-12);
}

TEST(Certify, HMatchesQuadrature) {
  SysModel s = scalar_system(0.5);
  BoundKit kit = derive_bounds(s, unit_cert(0.875));
  oracle::Scalar o;
  for (double t : {0.05, 0.125, 0.25, 0.5, 1.0}) EXPECT_TRUE(oracle::close(compute_h(kit, s, t), oracle::h(o, t), 1e-6)) << t;
  EXPECT_EQ(compute_h(kit, s, 0.0), 0.0);
  EXPECT_THROW(compute_h(kit, s, -0.1), DomainError);
  double prev = 1.0;
  for (double t : {1e-2, 1e-4, 1e-6}) {
    double v = compute_h(kit, s, t);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-4);

  SysModel det = load("scalar_det.sys");
  BoundKit dk = derive_bounds(det, unit_cert(0.99));
  for (double t : {0.0, 0.1, 1.0, 10.0}) EXPECT_EQ(compute_h(dk, det, t), 0.0);
}

TEST(Certify, PsiExamples) {
  SysModel a = scalar_system(0.5, 1.0);
  SysModel b = a;
  b.p = 1;
  NetworkSpec net;
  net.nodes = {{"a", a, 1.0, {}, {}}, {"b", b, 1.0, {}, {}}, {"c", scalar_system(0.5, 1.0), 1.0, {}, {}}};
  net.nodes[2].sys.p = 0;
  net.edges = {{0, 1}, {1, 0}};
  net.tau = 1.0;
  wire_network(net);
  EXPECT_NEAR(compute_psi(net, 1, 1.0), std::sqrt(2 * 4 * std::exp(3.0)), 1e-12);
  EXPECT_NEAR(compute_psi(net, 1, 1.0), 12.676, 5e-4);
  EXPECT_NEAR(compute_psi(net, 0, 0.3), oracle::psi_one(1.0, 1.0, 0.3), 1e-12);
  EXPECT_EQ(compute_psi(net, 0, 0.0), 0.0);
  for (double t : {0.0, 0.5, 3.0}) EXPECT_EQ(compute_psi(net, 2, t), 0.0);
}

TEST(Certify, CExamples) {
  EXPECT_NEAR(compute_C(1.0, 0.0, 1.0), 4 * std::exp(3.0), 1e-12);
  EXPECT_NEAR(compute_C(1.0, 0.0, 1.0), 80.342, 5e-4);
  EXPECT_DOUBLE_EQ(compute_C(0.0, 0.0, 1.0), 4.0);
  EXPECT_NEAR(compute_C(2.0, 0.7, 1e-12), 2 * 1.7, 1e-9);
}

TEST(Certify, EpsAndEtaMatchStraightLineScript) {
  SysModel s = scalar_system(0.5);
  BoundKit kit = derive_bounds(s, unit_cert(0.875));
  oracle::Scalar o;
  struct Tuple {
    double tau, eps, omega, psi, et;
  };
  for (Tuple t : {Tuple{0.5, 0.5, 0.05, 0.0, 0.1}, Tuple{0.5, 3.5, 0.05, 0.0, 0.0}, Tuple{0.25, 4.0, 0.1, 0.0, 0.05},
                  Tuple{1.0, 3.0, 0.0, 0.2, 0.1}, Tuple{2.0, 5.0, 0.02, 0.0, 0.3}}) {
    DisturbanceTerms dt{t.psi, t.et};
    EXPECT_TRUE(oracle::close(eps_lower_bound(kit, s, t.tau, dt), oracle::eps_lower(o, t.tau, t.psi, t.et), 1e-6));
    EXPECT_TRUE(oracle::close(eta_upper_bound(kit, s, t.tau, t.eps, t.omega, dt),
                              oracle::eta_upper(o, t.tau, t.eps, t.omega, t.psi, t.et), 1e-6))
        << eta_upper_bound(kit, s, t.tau, t.eps, t.omega, dt) << " vs "
        << oracle::eta_upper(o, t.tau, t.eps, t.omega, t.psi, t.et);
  }
}

TEST(Certify, EpsBelowLowerBoundIsInfeasible) {
  SysModel s = scalar_system(0.5);
  BoundKit kit = derive_bounds(s, unit_cert(0.875));
  double lb = eps_lower_bound(kit, s, 0.5, {0.0, 0.1});
  EXPECT_LT(eta_upper_bound(kit, s, 0.5, 0.9 * lb, 0.0, {0.0, 0.1}), 0.0);
  EXPECT_LT(eta_upper_bound(kit, s, 0.5, 0.5, 0.05, {0.0, 0.1}), 0.0);
}

TEST(Certify, DeterministicUndisturbedCase) {
  SysModel det = load("scalar_det.sys");
  BoundKit kit = derive_bounds(det, unit_cert(0.99));
  EXPECT_EQ(eps_lower_bound(kit, det, 0.5), 0.0);
  for (double eps : {0.01, 0.1, 1.0}) {
    auto t = eta_bound_terms(kit, det, 0.5, eps, 0.0);
    EXPECT_GT(t.bound, 0.0);
    EXPECT_DOUBLE_EQ(t.bound, std::min(eps * eps, kit.gamma_hat.invert((1 - std::exp(-0.99 * 0.5)) * 0.5 * eps * eps)));
  }
}

TEST(Certify, EtaBoundMonotone) {
  SysModel s = scalar_system(0.5);
  BoundKit kit = derive_bounds(s, unit_cert(0.875));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> eps(0.1, 8.0), om(0.0, 0.3), et(0.0, 0.5), tau(0.1, 2.0);
  for (int k = 0; k < 300; ++k) {
    double T = tau(rng), e1 = eps(rng), e2 = eps(rng), w1 = om(rng), w2 = om(rng), d1 = et(rng), d2 = et(rng);
    if (e1 > e2) std::swap(e1, e2);
    if (w1 > w2) std::swap(w1, w2);
    if (d1 > d2) std::swap(d1, d2);
    EXPECT_LE(eta_upper_bound(kit, s, T, e1, w1, {0, d1}), eta_upper_bound(kit, s, T, e2, w1, {0, d1}));
    EXPECT_GE(eta_upper_bound(kit, s, T, e1, w1, {0, d1}), eta_upper_bound(kit, s, T, e1, w2, {0, d1}));
    EXPECT_GE(eta_upper_bound(kit, s, T, e1, w1, {0, d1}), eta_upper_bound(kit, s, T, e1, w1, {0, d2}));
    EXPECT_LE(eps_lower_bound(kit, s, T, {0, d1}), eps_lower_bound(kit, s, T, {0, d2}));
  }
}

TEST(Certify, FeasibleAboveLowerBound) {
  SysModel s = load("scalar.sys");
  auto cert = QuadraticCertificate::from_system(s);
  BoundKit kit = derive_bounds(s, cert);
  for (double tau : {0.25, 0.5, 1.0}) {
    double lb = eps_lower_bound(kit, s, tau);
    for (double f : {1.001, 1.05, 1.5}) {
      NodeParams np = synthesize_node(s, tau, f * lb, {});
      EXPECT_TRUE(np.feasible) << np.reason;
      EXPECT_GT(np.eta.at(0), 0.0);
      EXPECT_LE(np.eta[0], np.eta_bound);
      EXPECT_LE(np.omega[0], np.omega_scalar);
      EXPECT_GE(eta_upper_bound(kit, s, tau, f * lb, np.omega[0]), np.eta[0]);
    }
  }
}

TEST(Certify, ScalarModelNumbers) {
  SysModel s = load("scalar.sys");
  auto cert = QuadraticCertificate::from_system(s);
  BoundKit kit = derive_bounds(s, cert);
  oracle::Scalar o;
  EXPECT_TRUE(oracle::close(compute_h(kit, s, 0.5), oracle::h(o, 0.5), 1e-6));
  EXPECT_TRUE(oracle::close(eps_lower_bound(kit, s, 0.5), oracle::eps_lower(o, 0.5, 0, 0), 1e-6));
}
