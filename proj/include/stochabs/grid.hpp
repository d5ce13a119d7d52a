/*
 * grid.hpp
 *
 * Uniform grids with points anchor + 2 k eta (per axis) restricted to a box.
 * State grids are anchored at the origin; input grids at the box center.
 */

#ifndef STOCHABS_GRID_HPP_
#define STOCHABS_GRID_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "system.hpp"

namespace stochabs {

/// Absolute slack on every "within eta" test.
inline constexpr double kGeomSlack = 1e-9;

/**
 * Nearest point 2 k eta_i per axis; exact midpoints round toward +inf.
 * Axes with eta_i == 0 are passed through.
 */
inline Vec quantize(std::span<const double> x, std::span<const double> eta) {
  Vec q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (eta[i] == 0.0) {
      q[i] = x[i];
      continue;
    }
    double k = std::floor(x[i] / (2.0 * eta[i]) + 0.5);
    q[i] = 2.0 * k * eta[i];
  }
  return q;
}

inline Vec quantize(std::span<const double> x, double eta) { return quantize(x, Vec(x.size(), eta)); }

/// Flat list of points of a fixed dimension.
struct PointSet {
  int dim = 0;
  Vec data;

  std::size_t size() const { return dim == 0 ? count0 : data.size() / std::size_t(dim); }
  std::span<const double> at(std::size_t i) const {
    return {data.data() + i * std::size_t(dim), std::size_t(dim)};
  }
  void push(std::span<const double> p) {
    if (dim == 0)
      ++count0;
    else
      data.insert(data.end(), p.begin(), p.end());
  }
  bool operator==(const PointSet &o) const { return dim == o.dim && data == o.data && count0 == o.count0; }

  /// Number of zero-dimensional points (only meaningful when dim == 0).
  std::size_t count0 = 0;
};

/**
 * @brief Grid restricted to a box, indexed lexicographically with axis 0
 * most significant (so index order equals coordinate order).
 */
class Grid {
public:
  Grid() = default;
  Grid(Box box, Vec eta, Vec anchor) : box_(std::move(box)), eta_(std::move(eta)), anchor_(std::move(anchor)) {
    const std::size_t d = box_.dim();
    kmin_.resize(d), count_.resize(d);
    for (std::size_t a = 0; a < d; ++a) {
      if (eta_[a] < 0.0 || !std::isfinite(eta_[a])) throw std::invalid_argument("grid spacing must be finite and nonnegative");
      if (eta_[a] == 0.0) {
        kmin_[a] = 0;
        count_[a] = (box_.lo[a] <= anchor_[a] && anchor_[a] <= box_.hi[a]) ? 1 : 0;
        continue;
      }
      const double h = 2.0 * eta_[a];
      long lo = long(std::ceil((box_.lo[a] - anchor_[a]) / h - 1e-9));
      long hi = long(std::floor((box_.hi[a] - anchor_[a]) / h + 1e-9));
      kmin_[a] = lo;
      count_[a] = hi >= lo ? std::uint64_t(hi - lo + 1) : 0;
    }
  }

  static Grid state_grid(const Box &box, const Vec &eta) { return Grid(box, eta, Vec(box.dim(), 0.0)); }
  static Grid input_grid(const Box &box, const Vec &omega) { return Grid(box, omega, box.center()); }

  std::size_t dim() const { return box_.dim(); }
  const Vec &eta() const { return eta_; }
  const Box &box() const { return box_; }

  /// Closed-form product of per-axis counts (saturates at uint64 max).
  std::uint64_t size() const {
    std::uint64_t s = 1;
    for (auto c : count_) {
      if (c == 0) return 0;
      if (s > std::numeric_limits<std::uint64_t>::max() / c) return std::numeric_limits<std::uint64_t>::max();
      s *= c;
    }
    return s;
  }
  std::uint64_t axis_count(std::size_t a) const { return count_[a]; }

  double coord(std::size_t a, long k) const { return anchor_[a] + 2.0 * double(k) * eta_[a]; }

  Vec point(std::uint64_t idx) const {
    Vec x(dim());
    for (std::size_t a = dim(); a-- > 0;) {
      x[a] = coord(a, kmin_[a] + long(idx % count_[a]));
      idx /= count_[a];
    }
    return x;
  }

  PointSet points() const {
    PointSet ps;
    ps.dim = int(dim());
    const std::uint64_t N = size();
    for (std::uint64_t i = 0; i < N; ++i) ps.push(point(i));
    return ps;
  }

  /**
   * Every box point lies within eta (per axis, plus slack) of some grid point
   * inside the box.
   */
  bool covers_box() const {
    for (std::size_t a = 0; a < dim(); ++a) {
      if (count_[a] == 0) return false;
      double first = coord(a, kmin_[a]);
      double last = coord(a, kmin_[a] + long(count_[a]) - 1);
      if (first - box_.lo[a] > eta_[a] + kGeomSlack) return false;
      if (box_.hi[a] - last > eta_[a] + kGeomSlack) return false;
    }
    return true;
  }

  /// Sorted indices of grid points q with |q_a - c_a| <= radius_a + slack on every axis.
  std::vector<std::uint32_t> within(std::span<const double> c, std::span<const double> radius,
                                    double slack = kGeomSlack) const {
    const std::size_t d = dim();
    std::vector<long> lo(d), hi(d);
    for (std::size_t a = 0; a < d; ++a) {
      if (count_[a] == 0) return {};
      long kmax = kmin_[a] + long(count_[a]) - 1;
      if (eta_[a] == 0.0) {
        if (std::abs(anchor_[a] - c[a]) > radius[a] + slack) return {};
        lo[a] = hi[a] = kmin_[a];
        continue;
      }
      const double h = 2.0 * eta_[a];
      long l = long(std::ceil((c[a] - radius[a] - slack - anchor_[a]) / h));
      long u = long(std::floor((c[a] + radius[a] + slack - anchor_[a]) / h));
      // guard against rounding in the division
      while (l <= u && std::abs(coord(a, l) - c[a]) > radius[a] + slack) ++l;
      while (u >= l && std::abs(coord(a, u) - c[a]) > radius[a] + slack) --u;
      lo[a] = std::max(l, kmin_[a]);
      hi[a] = std::min(u, kmax);
      if (lo[a] > hi[a]) return {};
    }
    std::vector<std::uint32_t> out;
    std::vector<long> k(lo);
    for (;;) {
      std::uint64_t idx = 0;
      for (std::size_t a = 0; a < d; ++a) idx = idx * count_[a] + std::uint64_t(k[a] - kmin_[a]);
      out.push_back(std::uint32_t(idx));
      std::size_t a = d;
      while (a > 0) {
        --a;
        if (++k[a] <= hi[a]) break;
        k[a] = lo[a];
        if (a == 0) return out;
      }
      if (d == 0) return out;
    }
  }

  /// Index of the grid point nearest to x (clamped into the box grid).
  std::uint64_t nearest(std::span<const double> x) const {
    std::uint64_t idx = 0;
    for (std::size_t a = 0; a < dim(); ++a) {
      long k = eta_[a] == 0.0 ? kmin_[a] : long(std::floor((x[a] - anchor_[a]) / (2.0 * eta_[a]) + 0.5));
      k = std::clamp(k, kmin_[a], kmin_[a] + long(count_[a]) - 1);
      idx = idx * count_[a] + std::uint64_t(k - kmin_[a]);
    }
    return idx;
  }

private:
  Box box_;
  Vec eta_;
  Vec anchor_;
  std::vector<long> kmin_;
  std::vector<std::uint64_t> count_;
};

/**
 * Largest spacing <= eta_max whose origin-anchored grid covers [lo, hi]
 * exactly, searched over M / (2k) with M = max(|lo|, |hi|) so the far end is a
 * grid point. Returns 0 when nothing up to `max_k` works.
 */
inline double snap_state_spacing(double lo, double hi, double eta_max, long max_k = 1000000) {
  if (!(eta_max > 0.0)) return 0.0;
  const double M = std::max(std::abs(lo), std::abs(hi));
  if (M == 0.0) return eta_max;
  long k0 = std::max(1L, long(std::ceil(M / (2.0 * eta_max) - 1e-12)));
  for (long k = k0; k <= max_k; ++k) {
    double eta = M / (2.0 * double(k));
    if (eta > eta_max) continue;
    Box b{{lo}, {hi}};
    if (Grid::state_grid(b, {eta}).covers_box()) return eta;
  }
  return 0.0;
}

/// Largest spacing h/(2k) <= omega_max for a center-anchored grid on [lo, hi]; 0 for a degenerate box.
inline double snap_input_spacing(double lo, double hi, double omega_max) {
  const double h = 0.5 * (hi - lo);
  if (h == 0.0) return 0.0;
  if (!(omega_max > 0.0)) return 0.0;
  if (omega_max >= h) return h;
  long k = long(std::ceil(h / (2.0 * omega_max) - 1e-12));
  k = std::max(k, 1L);
  double om = h / (2.0 * double(k));
  while (om > omega_max) om = h / (2.0 * double(++k));
  return om;
}

} // namespace stochabs

#endif /* STOCHABS_GRID_HPP_ */
