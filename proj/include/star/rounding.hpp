#pragma once

#include <optional>
#include <vector>

#include "star/special_functions.hpp"

namespace star {

/// Partition {A_j = [a_j, a_{j+1})} of the latent count scale.
///
/// The default partition has a_0 = -inf and a_j = j for j >= 1. A bounded
/// scheme sets a_{y_max + 1} = +inf so every count lands in {0, ..., y_max};
/// a right-censored scheme ("C or more") is the bounded scheme with y_max = C.
class RoundingScheme {
 public:
  /// Default integer breakpoints, no upper bound.
  static RoundingScheme unbounded();
  static RoundingScheme bounded(int y_max);
  static RoundingScheme censored(int censor_at);
  /// Bounded scheme with explicit finite breakpoints a_1 < ... < a_m (y_max = m).
  static RoundingScheme with_breakpoints(std::vector<double> finite_breakpoints);

  RoundingScheme() = default;

  std::optional<int> y_max() const { return y_max_; }
  bool is_bounded() const { return y_max_.has_value(); }
  std::optional<int> censored_at() const { return censored_at_; }
  /// Explicit breakpoints a_1..a_m, empty for the default integer grid.
  const std::vector<double>& custom_breakpoints() const { return breakpoints_; }

  /// a_j for j >= 0.
  double breakpoint(int j) const;
  /// [a_j, a_{j+1}).
  Interval cell(int j) const { return {breakpoint(j), breakpoint(j + 1)}; }
  bool in_support(long long j) const { return j >= 0 && (!y_max_ || j <= *y_max_); }

  bool operator==(const RoundingScheme&) const = default;

 private:
  std::optional<int> y_max_;
  std::optional<int> censored_at_;
  std::vector<double> breakpoints_;
};

/// h(y*): the j with a_j <= y* < a_{j+1}.
int round_value(double y_star, const RoundingScheme& scheme);

}  // namespace star
