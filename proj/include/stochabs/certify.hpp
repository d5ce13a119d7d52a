/*
 * certify.hpp
 *
 * Quadratic incremental Lyapunov certificates V(x,x') = 1/2 (x-x')^T P (x-x')
 * for second-moment incremental ISS, and the scalar bound functions derived
 * from them: class-K comparison functions, the noisy/noise-free distance
 * bound h, the neighbour-disturbance growth psi, and the quantization bounds
 * on eps and eta.
 */

#ifndef STOCHABS_CERTIFY_HPP_
#define STOCHABS_CERTIFY_HPP_

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmpfun.hpp"
#include "system.hpp"

namespace stochabs {

class CertificateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Symmetric PSD square root through the eigendecomposition; tiny negative
/// eigenvalues are clamped to zero.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd &M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double mat_inf_norm(const Eigen::MatrixXd &M) { return M.cwiseAbs().rowwise().sum().maxCoeff(); }

} // namespace detail

struct QuadraticCertificate {
  Eigen::MatrixXd P;
  double kappa = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  double sqrtP_infnorm = 0.0;
  double Lu = 0.0;
  double Lw = 0.0;

  int n() const { return int(P.rows()); }

  /// 1/2 (x - x')^T P (x - x')
  double V(std::span<const double> x, std::span<const double> xp) const {
    const int k = n();
    double s = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) s += (x[i] - xp[i]) * P(i, j) * (x[j] - xp[j]);
    return 0.5 * s;
  }

  /**
   * Builds and validates the certificate. Throws CertificateError when P is
   * not symmetric within 1e-12 or not positive definite.
   */
  static QuadraticCertificate make(const Eigen::MatrixXd &P, double kappa, double Lu, double Lw) {
    if (P.rows() != P.cols() || P.rows() == 0) throw CertificateError("P must be a nonempty square matrix");
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw CertificateError("P is not symmetric");
    if (!(kappa > 0.0)) throw CertificateError("kappa must be positive");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    QuadraticCertificate c;
    c.P = 0.5 * (P + P.transpose());
    c.kappa = kappa;
    c.lambda_min = es.eigenvalues().minCoeff();
    c.lambda_max = es.eigenvalues().maxCoeff();
    if (!(c.lambda_min > 0.0)) throw CertificateError("P is not positive definite (lambda_min = " + std::to_string(c.lambda_min) + ")");
    c.sqrtP_infnorm = detail::mat_inf_norm(detail::sym_sqrt(c.P));
    c.Lu = Lu;
    c.Lw = Lw;
    return c;
  }

  /// From the `cert` line of a system description.
  static QuadraticCertificate from_system(const SysModel &sys) {
    if (!sys.cert) throw CertificateError("system '" + sys.name + "' declares no certificate");
    Eigen::MatrixXd P(sys.n, sys.n);
    for (int i = 0; i < sys.n; ++i)
      for (int j = 0; j < sys.n; ++j) P(i, j) = sys.cert->P[std::size_t(i * sys.n + j)];
    return make(P, sys.cert->kappa, sys.Lu(), sys.Lw());
  }
};

enum class VerifyMode { LinearExact, Sampled };

struct CertificateReport {
  bool accepted = false;
  /// LinearExact: largest eigenvalue of sym(A^T P + P A + sum G^T P G + 2 kappa P).
  /// Sampled: largest (lhs - rhs) over samples.
  double margin = 0.0;
  std::string detail;
};

/// f = A x + B u + E w + c and sigma(:,k) = G_k x + g_k, read off symbolically.
struct LinearModel {
  Eigen::MatrixXd A;
  std::vector<Eigen::MatrixXd> G;
};

inline LinearModel extract_linear(const SysModel &sys) {
  LinearModel lm;
  lm.A = Eigen::MatrixXd::Zero(sys.n, sys.n);
  for (int i = 0; i < sys.n; ++i) {
    auto af = affine_form(sys.drift[std::size_t(i)], sys.dims());
    if (!af) throw CertificateError("drift for x" + std::to_string(i + 1) + " is not affine: " + expr::print(sys.drift[std::size_t(i)]));
    for (int j = 0; j < sys.n; ++j) lm.A(i, j) = af->coef[std::size_t(j)];
  }
  for (int k = 0; k < sys.r; ++k) {
    Eigen::MatrixXd Gk = Eigen::MatrixXd::Zero(sys.n, sys.n);
    for (int i = 0; i < sys.n; ++i) {
      const Expr &e = sys.diffusion[std::size_t(i * sys.r + k)];
      if (!e) continue;
      auto af = affine_form(e, sys.dims());
      if (!af) throw CertificateError("diffusion entry is not affine: " + expr::print(e));
      for (int j = 0; j < sys.n; ++j) Gk(i, j) = af->coef[std::size_t(j)];
    }
    lm.G.push_back(Gk);
  }
  return lm;
}

/**
 * Checks
 *   (x-x')^T P (f(x,u,w) - f(x',u,w)) + 1/2 ||sqrt(P)(sigma(x) - sigma(x'))||_F^2
 *       <= -2 kappa V(x,x').
 *
 * LinearExact requires affine drift and diffusion and reduces the condition
 * to A^T P + P A + sum_k G_k^T P G_k <= -2 kappa P (negative semidefinite
 * difference, tolerance 1e-9 relative to ||P||). Sampled evaluates the
 * inequality on random (x, x', u, w) in D x D x U x W and refutes on the
 * first violation beyond the same tolerance.
 */
inline CertificateReport verify_certificate(const SysModel &sys, const QuadraticCertificate &cert, VerifyMode mode,
                                            std::size_t samples = 10000, std::uint64_t seed = 1) {
  if (cert.n() != sys.n) throw CertificateError("certificate dimension does not match the system");
  const double tol = 1e-9 * std::max(1.0, cert.lambda_max);
  CertificateReport rep;
  if (mode == VerifyMode::LinearExact) {
    LinearModel lm = extract_linear(sys);
    Eigen::MatrixXd M = lm.A.transpose() * cert.P + cert.P * lm.A + 2.0 * cert.kappa * cert.P;
    for (const auto &Gk : lm.G) M += Gk.transpose() * cert.P * Gk;
    M = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    rep.margin = es.eigenvalues().maxCoeff();
    rep.accepted = rep.margin <= tol;
    rep.detail = "max eigenvalue of A^T P + P A + sum G^T P G + 2 kappa P = " + expr::format_real(rep.margin);
    return rep;
  }
  std::mt19937_64 rng(seed);
  const int n = sys.n, r = sys.r;
  rep.accepted = true;
  rep.margin = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd d(n), df(n);
  Eigen::MatrixXd dS(n, std::max(r, 1));
  for (std::size_t s = 0; s < samples; ++s) {
    Vec x = sys.domain.sample(rng), xp = sys.domain.sample(rng);
    Vec u = sys.input.sample(rng), w = sys.dist.sample(rng);
    Vec fx = sys.drift_at(x, u, w), fxp = sys.drift_at(xp, u, w);
    Vec sx = sys.diffusion_at(x), sxp = sys.diffusion_at(xp);
    for (int i = 0; i < n; ++i) {
      d(i) = x[std::size_t(i)] - xp[std::size_t(i)];
      df(i) = fx[std::size_t(i)] - fxp[std::size_t(i)];
    }
    double frob = 0.0;
    if (r > 0) {
      dS.setZero();
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < r; ++k) dS(i, k) = sx[std::size_t(i * r + k)] - sxp[std::size_t(i * r + k)];
      frob = (dS.transpose() * cert.P * dS).trace();
    }
    double lhs = d.dot(cert.P * df) + 0.5 * frob;
    double rhs = -cert.kappa * d.dot(cert.P * d);
    double excess = lhs - rhs;
    rep.margin = std::max(rep.margin, excess);
    if (excess > tol * std::max(1.0, d.squaredNorm()) && rep.accepted) {
      rep.accepted = false;
      rep.detail = "violated at x=" + detail::fmt_vec(x) + " x'=" + detail::fmt_vec(xp) + " u=" + detail::fmt_vec(u) +
                   " w=" + detail::fmt_vec(w) + ": lhs=" + expr::format_real(lhs) + " rhs=" + expr::format_real(rhs);
    }
  }
  if (rep.accepted) rep.detail = "no violation in " + std::to_string(samples) + " samples";
  return rep;
}

/**
 * @brief Comparison functions witnessing the certificate.
 *
 * alpha_low(r)  = 1/2 lambda_min r            (convex)
 * alpha_high(r) = 1/2 n lambda_max r          (concave)
 * sigma_u(r)    = (n Lu^2 / kappa) ||sqrtP||^2 r^2
 * sigma_d(r)    = (n Lw^2 / kappa) ||sqrtP||^2 r
 * gamma_hat(r)  = n lambda_max diam_inf(D) r
 * beta(r, s)    = alpha_low^-1(alpha_high(r)) e^{-kappa s}
 * rho_u         = alpha_low^-1 o sigma_u / kappa,  rho_d likewise
 */
struct BoundKit {
  ComparisonFunction alpha_low, alpha_high, sigma_u, sigma_d, gamma_hat, rho_u, rho_d;
  KLFunction beta;
  double kappa = 0.0;
  int n = 0;
  /// ||sqrt(H)||_inf^2 for the 2n x 2n Hessian bound H = [[P,-P],[-P,P]]
  double hessian_sqrt_norm_sq = 0.0;
};

inline BoundKit derive_bounds(const SysModel &sys, const QuadraticCertificate &cert) {
  const int n = cert.n();
  const double kap = cert.kappa;
  const double sp2 = cert.sqrtP_infnorm * cert.sqrtP_infnorm;
  BoundKit kit;
  kit.n = n;
  kit.kappa = kap;
  kit.alpha_low = ComparisonFunction::linear(0.5 * cert.lambda_min);
  kit.alpha_high = ComparisonFunction::linear(0.5 * n * cert.lambda_max);
  double cu = n * cert.Lu * cert.Lu / kap * sp2;
  kit.sigma_u = cu == 0.0 ? ComparisonFunction::zero() : ComparisonFunction::power_law(cu, 2.0);
  kit.sigma_d = ComparisonFunction::linear(n * cert.Lw * cert.Lw / kap * sp2);
  kit.gamma_hat = ComparisonFunction::linear(n * cert.lambda_max * sys.domain.inf_diameter());
  ComparisonFunction alow_inv = kit.alpha_low.inverse();
  kit.beta = KLFunction(ComparisonFunction::compose(alow_inv, kit.alpha_high), kap);
  auto over_kappa = [&](const ComparisonFunction &f) -> ComparisonFunction {
    if (f.is_zero()) return f;
    return ComparisonFunction::compose(alow_inv, ComparisonFunction::compose(ComparisonFunction::linear(1.0 / kap), f));
  };
  kit.rho_u = over_kappa(kit.sigma_u);
  kit.rho_d = over_kappa(kit.sigma_d);

  Eigen::MatrixXd H(2 * n, 2 * n);
  H << cert.P, -cert.P, -cert.P, cert.P;
  double hn = detail::mat_inf_norm(detail::sym_sqrt(H));
  kit.hessian_sqrt_norm_sq = hn * hn;
  return kit;
}

/**
 * Upper bound on E||xi(t) - xibar(t)||^2 between the SDE solution and the
 * noise-free flow from the same point:
 *
 *   h(t) = alpha_low^-1( 1/2 ||sqrt(H)||^2 n min(n,r) e^{-kappa t} Lsigma^2
 *            * int_0^t [ beta(sup_D ||x||^2, s) + rho_u(sup_U ||u||) + rho_d(sup_W ||w||^2) ] ds )
 *
 * The integrand is b e^{-kappa s} + c, so the integral is closed-form.
 */
inline double compute_h(const BoundKit &kit, const SysModel &sys, double t) {
  if (!(t >= 0.0)) throw DomainError("h evaluated at negative time");
  if (t == 0.0 || sys.Lsigma == 0.0) return 0.0;
  const double xs = sys.domain.sup_inf_norm();
  const double us = sys.input.sup_inf_norm();
  const double ws = sys.dist.sup_inf_norm();
  const double b = kit.beta.base()(xs * xs);
  const double c = kit.rho_u(us) + kit.rho_d(ws * ws);
  const double k = kit.beta.decay();
  const double integral = b * (-std::expm1(-k * t)) / k + c * t;
  const double pre = 0.5 * kit.hessian_sqrt_norm_sq * kit.n * std::min(sys.n, sys.r) * std::exp(-kit.kappa * t) *
                     sys.Lsigma * sys.Lsigma;
  return kit.alpha_low.invert(pre * integral);
}

/// C = 2 (1 + E||a||_2^2) (tau + 1) e^{(K + 2 sqrt K) tau}
inline double compute_C(double K, double a_second_moment, double tau) {
  const double alpha = K + 2.0 * std::sqrt(K);
  return 2.0 * (1.0 + a_second_moment) * (tau + 1.0) * std::exp(alpha * tau);
}

inline double compute_C(const SysModel &sys, double a_second_moment, double tau) {
  return compute_C(sys.K, a_second_moment, tau);
}

/**
 * psi_i(t) = [ t (t+1) sum_{j in N(i)} beta_j e^{alpha_j t} ]^{1/2}
 * with alpha_j = K_j + 2 sqrt(K_j), beta_j = 2 (1 + sup_{D_j} ||x||_2^2).
 * Zero for nodes without neighbours.
 */
inline double compute_psi(const NetworkSpec &spec, int i, double t) {
  if (!(t >= 0.0)) throw DomainError("psi evaluated at negative time");
  double s = 0.0;
  for (int j : neighbors(spec, i)) {
    const SysModel &sj = spec.nodes[std::size_t(j)].sys;
    if (!(sj.K > 0.0)) throw SpecError("neighbour " + spec.nodes[std::size_t(j)].name + " declares no growth constant");
    const double a = sj.K + 2.0 * std::sqrt(sj.K);
    const double b = 2.0 * (1.0 + sj.domain.sup_sq_two_norm());
    s += b * std::exp(a * t);
  }
  return std::sqrt(t * (t + 1.0) * s);
}

/// Disturbance-side inputs to the quantization bounds.
struct DisturbanceTerms {
  double psi_tau = 0.0;        // psi(tau); zero for piecewise-constant disturbances
  double eps_tilde_norm = 0.0; // ||eps~||_inf
};

/**
 * eps^2 must exceed
 *   alpha_low^-1( [ sigma_d(psi(tau) + ||eps~||) / (e kappa) + gamma_hat(h(tau)^{1/2}) ] / (1 - e^{-kappa tau}) ).
 * Returns the square root of that threshold.
 */
inline double eps_lower_bound(const BoundKit &kit, const SysModel &sys, double tau, DisturbanceTerms dt = {}) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  const double ek = std::exp(1.0) * kit.kappa;
  const double h = compute_h(kit, sys, tau);
  const double num = kit.sigma_d(dt.psi_tau + dt.eps_tilde_norm) / ek + kit.gamma_hat(std::sqrt(h));
  return std::sqrt(kit.alpha_low.invert(num / (-std::expm1(-kit.kappa * tau))));
}

/// Each term of the eta condition, kept for reporting.
struct EtaBoundTerms {
  double alpha_term = 0.0;      // alpha_high^-1(alpha_low(eps^2))
  double contraction = 0.0;     // (1 - e^{-kappa tau}) alpha_low(eps^2)
  double input_term = 0.0;      // sigma_u(omega) / (e kappa)
  double dist_term = 0.0;       // sigma_d(psi + ||eps~||) / (e kappa)
  double gamma_arg = 0.0;       // contraction - input_term - dist_term
  double gamma_inv = 0.0;       // gamma_hat^-1(gamma_arg), -inf when gamma_arg < 0
  double sqrt_h = 0.0;
  double bound = 0.0;           // min(alpha_term, gamma_inv - sqrt_h)

  /// Name of the binding or violated term.
  std::string limiting_term() const {
    if (gamma_arg < 0.0) return "gamma_hat argument (1-e^{-kappa tau}) alpha_low(eps^2) - sigma_u(omega)/(e kappa) - sigma_d(psi+|eps~|)/(e kappa) is negative";
    if (gamma_inv - sqrt_h <= alpha_term) return "gamma_hat^-1[...] - h(tau)^{1/2}";
    return "alpha_high^-1(alpha_low(eps^2))";
  }
};

inline EtaBoundTerms eta_bound_terms(const BoundKit &kit, const SysModel &sys, double tau, double eps, double omega,
                                     DisturbanceTerms dt = {}) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  if (!(eps > 0.0)) throw DomainError("eps must be positive");
  if (!(omega >= 0.0)) throw DomainError("omega must be nonnegative");
  const double ek = std::exp(1.0) * kit.kappa;
  const double al = kit.alpha_low(eps * eps);
  EtaBoundTerms t;
  t.alpha_term = kit.alpha_high.invert(al);
  t.contraction = -std::expm1(-kit.kappa * tau) * al;
  t.input_term = kit.sigma_u(omega) / ek;
  t.dist_term = kit.sigma_d(dt.psi_tau + dt.eps_tilde_norm) / ek;
  t.gamma_arg = t.contraction - t.input_term - t.dist_term;
  t.gamma_inv = t.gamma_arg < 0.0 ? -std::numeric_limits<double>::infinity() : kit.gamma_hat.invert(t.gamma_arg);
  t.sqrt_h = std::sqrt(compute_h(kit, sys, tau));
  t.bound = std::min(t.alpha_term, t.gamma_inv - t.sqrt_h);
  return t;
}

/**
 * Largest admissible eta for (tau, eps, omega, eps~). Negative (possibly
 * -inf) when no eta > 0 is admissible.
 */
inline double eta_upper_bound(const BoundKit &kit, const SysModel &sys, double tau, double eps, double omega,
                              DisturbanceTerms dt = {}) {
  return eta_bound_terms(kit, sys, tau, eps, omega, dt).bound;
}

} // namespace stochabs

#endif /* STOCHABS_CERTIFY_HPP_ */
