#include "star/monotone_spline.hpp"

#include <algorithm>
#include <cmath>

#include "star/error.hpp"

namespace star {

namespace {

void check_knots(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spline knots: x and y lengths differ");
  if (x.size() < 2) throw DomainError("spline needs at least two knots");
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || !std::isfinite(y[k])) throw DomainError("spline knots must be finite");
    if (k > 0 && !(x[k - 1] < x[k])) throw DomainError("spline knot_x must be strictly increasing");
    if (k > 0 && y[k] < y[k - 1]) throw DomainError("spline knot_y must be nondecreasing");
  }
}

}  // namespace

MonotoneSpline MonotoneSpline::fit(std::span<const double> knot_x, std::span<const double> knot_y) {
  check_knots(knot_x, knot_y);
  const std::size_t n = knot_x.size();
  std::vector<double> secant(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    secant[k] = (knot_y[k + 1] - knot_y[k]) / (knot_x[k + 1] - knot_x[k]);
  }

  std::vector<double> m(n);
  m.front() = secant.front();
  m.back() = secant.back();
  for (std::size_t k = 1; k + 1 < n; ++k) m[k] = 0.5 * (secant[k - 1] + secant[k]);

  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (secant[k] == 0.0) {
      m[k] = 0.0;
      m[k + 1] = 0.0;
    }
  }

  // Limiting a segment lowers a tangent shared with its left neighbour, which can
  // leave that neighbour non-monotone; sweep until no tangent changes.
  bool changed = true;
  for (std::size_t sweep = 0; changed && sweep < n; ++sweep) {
    changed = false;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double s = secant[k];
      if (s == 0.0) continue;
      const double alpha = m[k] / s;
      const double beta = m[k + 1] / s;
      const double a2b3 = 2.0 * alpha + beta - 3.0;
      const double ab23 = alpha + 2.0 * beta - 3.0;
      if (a2b3 > 0.0 && ab23 > 0.0 && alpha * (a2b3 + ab23) < a2b3 * a2b3) {
        // Outside the monotonicity region: pull (alpha, beta) onto the circle of radius 3.
        const double tau_s = 3.0 * s / std::hypot(alpha, beta);
        m[k] = tau_s * alpha;
        m[k + 1] = tau_s * beta;
        changed = true;
      }
    }
  }

  MonotoneSpline spline;
  spline.x_.assign(knot_x.begin(), knot_x.end());
  spline.y_.assign(knot_y.begin(), knot_y.end());
  spline.m_ = std::move(m);
  return spline;
}

MonotoneSpline MonotoneSpline::from_parts(std::vector<double> knot_x, std::vector<double> knot_y,
                                          std::vector<double> tangents) {
  check_knots(knot_x, knot_y);
  if (tangents.size() != knot_x.size()) throw DomainError("spline tangents: wrong length");
  for (double m : tangents) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw DomainError("spline tangents must be finite and >= 0");
  }
  MonotoneSpline spline;
  spline.x_ = std::move(knot_x);
  spline.y_ = std::move(knot_y);
  spline.m_ = std::move(tangents);
  return spline;
}

std::size_t MonotoneSpline::segment(double t) const {
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  const auto idx = static_cast<std::size_t>(it - x_.begin());
  return std::clamp<std::size_t>(idx == 0 ? 0 : idx - 1, 0, x_.size() - 2);
}

double MonotoneSpline::operator()(double t) const {
  if (t <= x_.front()) return y_.front() + m_.front() * (t - x_.front());
  if (t >= x_.back()) return y_.back() + m_.back() * (t - x_.back());
  const std::size_t k = segment(t);
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  return h00 * y_[k] + h10 * h * m_[k] + h01 * y_[k + 1] + h11 * h * m_[k + 1];
}

double MonotoneSpline::derivative(double t) const {
  if (t <= x_.front()) return m_.front();
  if (t >= x_.back()) return m_.back();
  const std::size_t k = segment(t);
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s;
  const double d00 = (6.0 * s2 - 6.0 * s) / h;
  const double d10 = 3.0 * s2 - 4.0 * s + 1.0;
  const double d01 = (-6.0 * s2 + 6.0 * s) / h;
  const double d11 = 3.0 * s2 - 2.0 * s;
  return d00 * y_[k] + d10 * m_[k] + d01 * y_[k + 1] + d11 * m_[k + 1];
}

double MonotoneSpline::inverse(double v) const {
  if (v <= y_.front()) {
    if (v == y_.front() || m_.front() <= 0.0) return x_.front();
    return x_.front() + (v - y_.front()) / m_.front();
  }
  if (v >= y_.back()) {
    if (v == y_.back() || m_.back() <= 0.0) {
      // Leftmost knot attaining the last value.
      const auto it = std::lower_bound(y_.begin(), y_.end(), y_.back());
      return x_[static_cast<std::size_t>(it - y_.begin())];
    }
    return x_.back() + (v - y_.back()) / m_.back();
  }
  const auto it = std::lower_bound(y_.begin(), y_.end(), v);
  const auto idx = static_cast<std::size_t>(it - y_.begin());
  if (y_[idx] == v) return x_[idx];
  const std::size_t k = idx - 1;  // y_[k] < v < y_[k + 1]

  double lo = x_[k];
  double hi = x_[k + 1];
  double t = lo + (hi - lo) * (v - y_[k]) / (y_[k + 1] - y_[k]);
  for (int it_count = 0; it_count < 100; ++it_count) {
    const double f = (*this)(t) - v;
    if (f == 0.0) return t;
    if (f < 0.0) {
      lo = t;
    } else {
      hi = t;
    }
    const double d = derivative(t);
    double next = d > 0.0 ? t - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t))) return next;
    t = next;
  }
  return t;
}

}  // namespace star
