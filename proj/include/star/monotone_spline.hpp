#pragma once

#include <span>
#include <vector>

namespace star {

/// Monotone piecewise-cubic Hermite interpolant with Fritsch-Carlson tangent
/// limiting (the same tangent rule as R's splinefun(method = "monoH.FC")).
///
/// Beyond the outer knots the spline continues linearly with the boundary
/// tangent.
class MonotoneSpline {
 public:
  /// Throws DomainError for fewer than two knots, non-increasing knot_x or
  /// decreasing knot_y.
  static MonotoneSpline fit(std::span<const double> knot_x, std::span<const double> knot_y);

  /// Rebuilds a spline from stored knots and tangents (model files). Validates
  /// ordering and that tangents are non-negative.
  static MonotoneSpline from_parts(std::vector<double> knot_x, std::vector<double> knot_y,
                                   std::vector<double> tangents);

  double operator()(double t) const;
  double derivative(double t) const;
  /// Smallest t with spline(t) = v; exact at the knots, Newton/bisection inside
  /// a segment, linear beyond the ends.
  double inverse(double v) const;

  const std::vector<double>& knot_x() const { return x_; }
  const std::vector<double>& knot_y() const { return y_; }
  const std::vector<double>& tangents() const { return m_; }

 private:
  MonotoneSpline() = default;
  std::size_t segment(double t) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;
};

}  // namespace star
