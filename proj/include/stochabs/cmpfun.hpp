/*
 * cmpfun.hpp
 *
 * Comparison functions of class K, K-infinity and KL with exact evaluation and
 * inversion. The family is generated by power laws under sums and
 * compositions, which is closed enough for every bound used by the library.
 */

#ifndef STOCHABS_CMPFUN_HPP_
#define STOCHABS_CMPFUN_HPP_

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace stochabs {

class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class RangeError : public std::range_error {
public:
  using std::range_error::range_error;
};

/**
 * @brief A K-infinity function from [0,inf) to [0,inf).
 *
 * Immutable value type; copies share the underlying tree.
 */
class ComparisonFunction {
public:
  struct Zero {};
  struct PowerLaw {
    double coef;
    double exponent;
  };
  struct Sum {
    std::vector<ComparisonFunction> terms;
  };
  struct Compose {
    std::vector<ComparisonFunction> outer_inner; // exactly two: {outer, inner}
  };
  using Node = std::variant<Zero, PowerLaw, Sum, Compose>;

  ComparisonFunction() : node_(std::make_shared<const Node>(Zero{})) {}

  static ComparisonFunction zero() { return ComparisonFunction(Zero{}); }

  static ComparisonFunction power_law(double coef, double exponent) {
    if (!(coef > 0.0) || !(exponent > 0.0) || !std::isfinite(coef) || !std::isfinite(exponent))
      throw DomainError("power law needs positive finite coefficient and exponent");
    return ComparisonFunction(PowerLaw{coef, exponent});
  }

  /// c*r; a zero coefficient yields the Zero function.
  static ComparisonFunction linear(double coef) {
    return coef == 0.0 ? zero() : power_law(coef, 1.0);
  }

  static ComparisonFunction sum(std::vector<ComparisonFunction> terms) {
    std::vector<ComparisonFunction> kept;
    for (auto &t : terms)
      if (!t.is_zero()) kept.push_back(std::move(t));
    if (kept.empty()) return zero();
    if (kept.size() == 1) return kept.front();
    return ComparisonFunction(Sum{std::move(kept)});
  }

  /// outer(inner(r))
  static ComparisonFunction compose(const ComparisonFunction &outer, const ComparisonFunction &inner) {
    if (outer.is_zero() || inner.is_zero()) return zero();
    return ComparisonFunction(Compose{{outer, inner}});
  }

  const Node &node() const { return *node_; }
  bool is_zero() const { return std::holds_alternative<Zero>(*node_); }

  double operator()(double r) const { return eval(r); }

  double eval(double r) const {
    if (!(r >= 0.0)) throw DomainError("comparison function evaluated at negative argument " + std::to_string(r));
    return eval_unchecked(r);
  }

  /**
   * Solves eval(x) = y for x >= 0.
   *
   * Power laws and their compositions invert in closed form. Sums are
   * inverted by bisection on [0, hi], doubling hi until eval(hi) > y, and
   * iterating until the bracket cannot be split any further in double.
   */
  double invert(double y) const {
    if (!(y >= 0.0)) throw DomainError("inverse requested for negative value " + std::to_string(y));
    return std::visit([y, this](const auto &n) { return invert_node(n, y); }, *node_);
  }

  /// Closed-form inverse function; only for power-law/compose trees.
  ComparisonFunction inverse() const {
    return std::visit(
        [](const auto &n) -> ComparisonFunction {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, PowerLaw>) {
            return power_law(std::pow(n.coef, -1.0 / n.exponent), 1.0 / n.exponent);
          } else if constexpr (std::is_same_v<T, Compose>) {
            return compose(n.outer_inner[1].inverse(), n.outer_inner[0].inverse());
          } else {
            throw RangeError("no closed-form inverse for zero or sum comparison functions");
          }
        },
        *node_);
  }

  /// True when the tree is a single power law with exponent <= 1 (or zero).
  bool is_concave() const {
    if (is_zero()) return true;
    if (auto p = std::get_if<PowerLaw>(node_.get())) return p->exponent <= 1.0;
    if (auto s = std::get_if<Sum>(node_.get())) {
      for (const auto &t : s->terms)
        if (!t.is_concave()) return false;
      return true;
    }
    return false;
  }

  bool is_convex() const {
    if (is_zero()) return true;
    if (auto p = std::get_if<PowerLaw>(node_.get())) return p->exponent >= 1.0;
    if (auto s = std::get_if<Sum>(node_.get())) {
      for (const auto &t : s->terms)
        if (!t.is_convex()) return false;
      return true;
    }
    return false;
  }

  /// Coefficient of a linear function c*r; throws otherwise.
  double linear_coefficient() const {
    if (is_zero()) return 0.0;
    if (auto p = std::get_if<PowerLaw>(node_.get()); p && p->exponent == 1.0) return p->coef;
    throw RangeError("comparison function is not linear");
  }

  std::string to_string() const {
    return std::visit(
        [](const auto &n) -> std::string {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return "0";
          } else if constexpr (std::is_same_v<T, PowerLaw>) {
            return std::to_string(n.coef) + "*r^" + std::to_string(n.exponent);
          } else if constexpr (std::is_same_v<T, Sum>) {
            std::string s = "(";
            for (std::size_t i = 0; i < n.terms.size(); ++i) s += (i ? " + " : "") + n.terms[i].to_string();
            return s + ")";
          } else {
            return n.outer_inner[0].to_string() + " o " + n.outer_inner[1].to_string();
          }
        },
        *node_);
  }

private:
  explicit ComparisonFunction(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}

  double eval_unchecked(double r) const {
    return std::visit(
        [r](const auto &n) -> double {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Zero>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, PowerLaw>) {
            return n.exponent == 1.0 ? n.coef * r : n.coef * std::pow(r, n.exponent);
          } else if constexpr (std::is_same_v<T, Sum>) {
            double acc = 0.0;
            for (const auto &t : n.terms) acc += t.eval_unchecked(r);
            return acc;
          } else {
            return n.outer_inner[0].eval_unchecked(n.outer_inner[1].eval_unchecked(r));
          }
        },
        *node_);
  }

  double invert_node(const Zero &, double y) const {
    if (y == 0.0) return 0.0;
    throw RangeError("zero comparison function cannot reach " + std::to_string(y));
  }

  double invert_node(const PowerLaw &p, double y) const {
    return p.exponent == 1.0 ? y / p.coef : std::pow(y / p.coef, 1.0 / p.exponent);
  }

  double invert_node(const Compose &c, double y) const {
    return c.outer_inner[1].invert(c.outer_inner[0].invert(y));
  }

  double invert_node(const Sum &, double y) const {
    if (y == 0.0) return 0.0;
    double lo = 0.0, hi = 1.0;
    int doublings = 0;
    while (eval_unchecked(hi) <= y) {
      lo = hi;
      hi *= 2.0;
      if (++doublings > 2100 || !std::isfinite(hi))
        throw RangeError("value " + std::to_string(y) + " outside the range of the sum");
    }
    for (int it = 0; it < 2000; ++it) {
      double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (eval_unchecked(mid) < y)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  std::shared_ptr<const Node> node_;
};

/// beta(r, s) = base(r) * exp(-decay * s)
class KLFunction {
public:
  KLFunction() = default;
  KLFunction(ComparisonFunction base, double decay) : base_(std::move(base)), decay_(decay) {
    if (!(decay > 0.0)) throw DomainError("KL decay rate must be positive");
  }

  double eval(double r, double s) const {
    if (!(s >= 0.0)) throw DomainError("KL function evaluated at negative time");
    return base_.eval(r) * std::exp(-decay_ * s);
  }
  double operator()(double r, double s) const { return eval(r, s); }

  const ComparisonFunction &base() const { return base_; }
  double decay() const { return decay_; }

private:
  ComparisonFunction base_;
  double decay_ = 1.0;
};

} // namespace stochabs

#endif /* STOCHABS_CMPFUN_HPP_ */
