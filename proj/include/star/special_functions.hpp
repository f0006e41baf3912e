#pragma once

// Scalar special functions for the latent Gaussian likelihood: normal
// density/CDF/quantile, tail-stable CDF differences, truncated-normal
// moments and chi-square tail probabilities.

#include <limits>
#include <span>

namespace star {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// An interval of the extended real line; either endpoint may be infinite.
struct Interval {
  double lower = -kInf;
  double upper = kInf;

  /// Throws DomainError unless lower < upper and neither endpoint is NaN.
  void validate() const;
  Interval shifted(double delta) const { return {lower + delta, upper + delta}; }
};

/// Smallest probability mass reported by norm_cdf_diff.
inline constexpr double kMassFloor = 1e-300;

double norm_pdf(double x);
double norm_cdf(double x);
/// Upper tail 1 - Phi(x), accurate for large positive x.
double norm_sf(double x);

/// Phi(x) - Phi(y) for x > y. Stable in both tails; see norm_cdf_diff.
struct ProbabilityMass {
  double value = 0.0;
  bool clamped = false;  // true when the exact mass is below kMassFloor
};
ProbabilityMass norm_mass(const Interval& interval);

/// Phi(upper) - Phi(lower), clamped below at kMassFloor.
double norm_cdf_diff(const Interval& interval);

/// log(Phi(upper) - Phi(lower)) without underflow, for arbitrarily remote
/// intervals. Always finite for a valid interval.
double log_norm_cdf_diff(const Interval& interval);

/// Inverse of norm_cdf on (0, 1). Throws DomainError outside (0, 1).
double norm_quantile(double p);

/// Mills ratio (1 - Phi(x)) / phi(x) for x >= 0.
double mills_ratio(double x);

struct TruncatedMoments {
  double m1 = 0.0;        // E[Z | Z in interval]
  double m2 = 0.0;        // E[Z^2 | Z in interval]
  double variance = 0.0;  // m2 - m1^2, computed without the subtraction where possible
};

/// Moments of N(mu, sigma^2) truncated to `interval`.
///
/// Uses the closed forms for E[Z] and E[Z^2] in the central region, Mills-ratio
/// forms when the whole interval lies in one tail, and a second-order expansion
/// about the midpoint when the interval is narrower than 1e-4 standard units.
/// Throws DegenerateTruncation (row 0) if the moments are not representable;
/// callers that know the observation index rethrow with it.
TruncatedMoments truncnorm_moments(double mu, double sigma, const Interval& interval);

/// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail.
double gamma_q(double a, double x);

double chisq_cdf(double x, int df);
/// Upper tail probability of the chi-square distribution.
double chisq_sf(double x, int df);
/// x with chisq_cdf(x, df) = p, by bisection. Throws DomainError for p outside
/// (0, 1) or df < 1.
double chisq_quantile(double p, int df);

/// Kolmogorov-Smirnov test of a sample against N(0, 1).
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_test_normal(std::span<const double> values);

}  // namespace star
