#include "star/rounding.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <string>

#include "star/error.hpp"

namespace star {

RoundingScheme RoundingScheme::unbounded() { return RoundingScheme{}; }

RoundingScheme RoundingScheme::bounded(int y_max) {
  if (y_max < 1) throw DomainError("y_max must be a positive integer, got " + std::to_string(y_max));
  RoundingScheme s;
  s.y_max_ = y_max;
  return s;
}

RoundingScheme RoundingScheme::censored(int censor_at) {
  RoundingScheme s = bounded(censor_at);
  s.censored_at_ = censor_at;
  return s;
}

RoundingScheme RoundingScheme::with_breakpoints(std::vector<double> finite_breakpoints) {
  if (finite_breakpoints.empty()) throw DomainError("explicit rounding scheme needs at least one breakpoint");
  for (std::size_t j = 0; j < finite_breakpoints.size(); ++j) {
    if (!std::isfinite(finite_breakpoints[j])) throw DomainError("explicit breakpoints must be finite");
    if (j > 0 && !(finite_breakpoints[j - 1] < finite_breakpoints[j])) {
      throw DomainError("breakpoints must be strictly increasing");
    }
  }
  RoundingScheme s;
  s.y_max_ = static_cast<int>(finite_breakpoints.size());
  s.breakpoints_ = std::move(finite_breakpoints);
  return s;
}

double RoundingScheme::breakpoint(int j) const {
  if (j <= 0) return -kInf;
  if (y_max_ && j > *y_max_) return kInf;
  if (!breakpoints_.empty()) return breakpoints_[static_cast<std::size_t>(j - 1)];
  return static_cast<double>(j);
}

int round_value(double y_star, const RoundingScheme& scheme) {
  if (std::isnan(y_star)) throw DomainError("round_value: NaN latent value");
  const auto& bp = scheme.custom_breakpoints();
  if (!bp.empty()) {
    // Number of finite breakpoints <= y_star.
    return static_cast<int>(std::upper_bound(bp.begin(), bp.end(), y_star) - bp.begin());
  }
  if (y_star < 1.0) return 0;
  const int cap = scheme.y_max().value_or(INT_MAX);
  if (y_star >= static_cast<double>(cap)) return cap;
  return static_cast<int>(std::floor(y_star));
}

}  // namespace star
