/*
 * flow.hpp
 *
 * Nominal (noise-free) flow of the drift under constant input and disturbance.
 */

#ifndef STOCHABS_FLOW_HPP_
#define STOCHABS_FLOW_HPP_

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "system.hpp"

namespace stochabs {

class IntegrationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct FlowOptions {
  int substeps = 16;
  int max_substeps = 1 << 16;
  /// Required step-doubling error estimate (inf-norm); <= 0 disables the check.
  double tolerance = 0.0;
  /// The domain box is inflated by this fraction of its width per side for the exit test.
  double inflate = 0.5;
};

struct FlowResult {
  Vec x;
  bool out_of_domain = false;
  int substeps = 0;
  double error_estimate = 0.0;
};

namespace detail {

/// Fixed-step RK4; returns false if the path leaves `box` (when given).
inline bool rk4(const SysModel &sys, Vec &x, std::span<const double> u, std::span<const double> w, double tau,
                int steps, const Box *box) {
  const std::size_t n = x.size();
  const double h = tau / steps;
  Vec k1(n), k2(n), k3(n), k4(n), y(n);
  bool inside = true;
  for (int s = 0; s < steps; ++s) {
    sys.eval_drift(x, u, w, k1);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + 0.5 * h * k1[i];
    sys.eval_drift(y, u, w, k2);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + 0.5 * h * k2[i];
    sys.eval_drift(y, u, w, k3);
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + h * k3[i];
    sys.eval_drift(y, u, w, k4);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (box && inside && !box->contains(x)) inside = false;
  }
  return inside;
}

} // namespace detail

/**
 * RK4 over [0, tau] with `substeps` steps, doubled until the difference to
 * the half-step solution is within tolerance.
 */
inline FlowResult flow_nominal(const SysModel &sys, std::span<const double> x0, std::span<const double> u,
                               std::span<const double> w, double tau, FlowOptions opt = {}) {
  if (opt.substeps < 1) throw std::invalid_argument("substeps must be at least 1");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
  Box inflated = sys.domain;
  for (std::size_t i = 0; i < inflated.dim(); ++i) {
    double pad = opt.inflate * (inflated.hi[i] - inflated.lo[i]);
    inflated.lo[i] -= pad;
    inflated.hi[i] += pad;
  }
  FlowResult res;
  for (int steps = opt.substeps;; steps *= 2) {
    Vec coarse(x0.begin(), x0.end()), fine(x0.begin(), x0.end());
    bool in1 = detail::rk4(sys, coarse, u, w, tau, steps, &inflated);
    bool in2 = detail::rk4(sys, fine, u, w, tau, 2 * steps, &inflated);
    for (double v : fine)
      if (!std::isfinite(v)) throw IntegrationError("nominal flow diverged");
    double err = inf_dist(coarse, fine);
    if (opt.tolerance <= 0.0 || err <= opt.tolerance) {
      res.x = std::move(coarse);
      res.out_of_domain = !(in1 && in2);
      res.substeps = steps;
      res.error_estimate = err;
      return res;
    }
    if (2 * steps > opt.max_substeps)
      throw IntegrationError("step-doubling estimate " + expr::format_real(err) + " above tolerance " +
                             expr::format_real(opt.tolerance) + " at the substep cap");
  }
}

} // namespace stochabs

#endif /* STOCHABS_FLOW_HPP_ */
