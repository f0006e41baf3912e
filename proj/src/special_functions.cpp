#include "star/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "star/error.hpp"

namespace star {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;  // 1/sqrt(2 pi)
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))
constexpr double kInvSqrt2 = 0.70710678118654752440;

// Intervals narrower than this (in standard units, scaled by the midpoint's
// distance from zero) use the midpoint expansion.
constexpr double kNarrowWidth = 1e-4;

bool is_narrow(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  const double c = 0.5 * (a + b);
  return (b - a) * (1.0 + std::abs(c)) < kNarrowWidth;
}

// Continued fraction for the Mills ratio, valid for x >= ~5 (modified Lentz).
double mills_continued_fraction(double x) {
  constexpr double tiny = 1e-300;
  double f = x;
  double c = x;
  double d = 0.0;
  for (int k = 1; k < 500; ++k) {
    d = x + k * d;
    if (std::abs(d) < tiny) d = tiny;
    c = x + k / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / f;
}

// Upper-tail representation of an interval [a, b] with a >= 0:
//   Phi(b) - Phi(a) = phi(a) * denom,  phi(b) / phi(a) = ratio.
struct TailForm {
  double ratio = 0.0;
  double one_minus_ratio = 1.0;
  double denom = 0.0;
};

TailForm upper_tail_form(double a, double b) {
  TailForm t;
  if (std::isinf(b)) {
    t.ratio = 0.0;
    t.one_minus_ratio = 1.0;
    t.denom = mills_ratio(a);
    return t;
  }
  const double exponent = -0.5 * (b - a) * (b + a);
  t.ratio = std::exp(exponent);
  t.one_minus_ratio = -std::expm1(exponent);
  t.denom = mills_ratio(a) - mills_ratio(b) * t.ratio;
  return t;
}

// Standardized moments (mean, variance) of N(0, 1) truncated to [a, b].
struct StdMoments {
  double mean;
  double variance;
};

StdMoments standard_truncated_moments(double a, double b) {
  if (std::isinf(a) && std::isinf(b)) return {0.0, 1.0};

  if (is_narrow(a, b)) {
    const double c = 0.5 * (a + b);
    const double w2 = (b - a) * (b - a);
    return {c - c * w2 / 12.0, w2 / 12.0};
  }

  if (b <= 0.0) {
    const StdMoments r = standard_truncated_moments(-b, -a);
    return {-r.mean, r.variance};
  }

  if (a >= 0.0) {
    const TailForm t = upper_tail_form(a, b);
    if (!(t.denom > 0.0) || !std::isfinite(t.denom)) return {NAN, NAN};
    const double mean = t.one_minus_ratio / t.denom;
    const double b_term = std::isinf(b) ? 0.0 : b * t.ratio;
    const double second = 1.0 + (a - b_term) / t.denom;
    return {mean, second - mean * mean};
  }

  // a < 0 < b: the mass is at least of order min(|a|, b) * phi(max) and the
  // direct closed forms are well conditioned.
  const double mass = norm_cdf(b) - norm_cdf(a);
  const double pa = std::isinf(a) ? 0.0 : norm_pdf(a);
  const double pb = std::isinf(b) ? 0.0 : norm_pdf(b);
  const double apa = std::isinf(a) ? 0.0 : a * pa;
  const double bpb = std::isinf(b) ? 0.0 : b * pb;
  const double mean = (pa - pb) / mass;
  const double second = 1.0 + (apa - bpb) / mass;
  return {mean, second - mean * mean};
}

}  // namespace

void Interval::validate() const {
  if (std::isnan(lower) || std::isnan(upper) || !(lower < upper)) {
    throw DomainError("degenerate interval [" + std::to_string(lower) + ", " +
                      std::to_string(upper) + "]: lower must be below upper");
  }
}

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

double mills_ratio(double x) {
  if (x < 0.0) throw DomainError("mills_ratio requires x >= 0");
  if (std::isinf(x)) return 0.0;
  if (x < 10.0) return norm_sf(x) / norm_pdf(x);
  return mills_continued_fraction(x);
}

ProbabilityMass norm_mass(const Interval& interval) {
  interval.validate();
  const double a = interval.lower;
  const double b = interval.upper;
  double value;
  if (is_narrow(a, b)) {
    const double c = 0.5 * (a + b);
    const double w = b - a;
    value = w * norm_pdf(c) * (1.0 + (c * c - 1.0) * w * w / 24.0);
  } else if (a >= 0.0) {
    value = norm_sf(a) - norm_sf(b);
  } else if (b <= 0.0) {
    value = norm_cdf(b) - norm_cdf(a);
  } else {
    value = 1.0 - norm_sf(b) - norm_cdf(a);
  }
  if (!(value >= kMassFloor)) return {kMassFloor, true};
  return {value, false};
}

double norm_cdf_diff(const Interval& interval) { return norm_mass(interval).value; }

double log_norm_cdf_diff(const Interval& interval) {
  interval.validate();
  const double a = interval.lower;
  const double b = interval.upper;
  if (is_narrow(a, b)) {
    const double c = 0.5 * (a + b);
    const double w = b - a;
    return std::log(w) - 0.5 * c * c - kLogSqrt2Pi + std::log1p((c * c - 1.0) * w * w / 24.0);
  }
  if (b <= 0.0) return log_norm_cdf_diff({-b, -a});
  if (a >= 0.0) {
    const TailForm t = upper_tail_form(a, b);
    return -0.5 * a * a - kLogSqrt2Pi + std::log(t.denom);
  }
  return std::log(1.0 - norm_sf(b) - norm_cdf(a));
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("norm_quantile requires 0 < p < 1, got " + std::to_string(p));
  }
  // 1 - p is exact for p >= 0.5, so the upper half reflects onto the lower
  // half without losing tail precision.
  if (p > 0.5) return -norm_quantile(1.0 - p);

  // Acklam's rational approximation (relative error below 1.2e-9).
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }

  // One Halley step on Phi(x) - p.
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

TruncatedMoments truncnorm_moments(double mu, double sigma, const Interval& interval) {
  interval.validate();
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
    throw DomainError("truncnorm_moments requires finite mu and sigma > 0");
  }
  const double a = (interval.lower - mu) / sigma;
  const double b = (interval.upper - mu) / sigma;
  if (!(a < b)) {
    throw DegenerateTruncation(0, "degenerate truncation: interval collapses after standardization");
  }
  const StdMoments s = standard_truncated_moments(a, b);
  if (!std::isfinite(s.mean) || !(s.variance > 0.0) || !std::isfinite(s.variance)) {
    throw DegenerateTruncation(0, "degenerate truncation: no representable mass in [" +
                                      std::to_string(a) + ", " + std::to_string(b) +
                                      "] standard units");
  }
  TruncatedMoments m;
  m.m1 = std::clamp(mu + sigma * s.mean, interval.lower, interval.upper);
  m.variance = sigma * sigma * s.variance;
  m.m2 = m.m1 * m.m1 + m.variance;
  return m;
}

namespace {

constexpr double kGammaEps = 1e-16;

double gamma_prefactor(double a, double x) { return std::exp(-x + a * std::log(x) - std::lgamma(a)); }

double gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kGammaEps) break;
  }
  return sum * gamma_prefactor(a, x);
}

double gamma_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kGammaEps) break;
  }
  return gamma_prefactor(a, x) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_p requires a > 0 and x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q requires a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chisq_cdf(double x, int df) {
  if (df < 1) throw DomainError("chi-square degrees of freedom must be >= 1");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * df, 0.5 * x);
}

double chisq_sf(double x, int df) {
  if (df < 1) throw DomainError("chi-square degrees of freedom must be >= 1");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * df, 0.5 * x);
}

double chisq_quantile(double p, int df) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("chisq_quantile requires 0 < p < 1, got " + std::to_string(p));
  }
  if (df < 1) throw DomainError("chi-square degrees of freedom must be >= 1");
  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(df));
  while (chisq_cdf(hi, df) < p) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (chisq_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

KsResult ks_test_normal(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  if (values.empty()) throw DataError("ks_test_normal: empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = norm_cdf(sorted[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  // Asymptotic Kolmogorov distribution with Stephens' small-sample correction.
  const double root_n = std::sqrt(n);
  const double lambda = (root_n + 0.12 + 0.11 / root_n) * d;
  double p = 0.0;
  if (lambda < 0.2) {
    p = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      p += term;
      if (std::abs(term) < 1e-16 * std::abs(p)) break;
      sign = -sign;
    }
    p = std::clamp(2.0 * p, 0.0, 1.0);
  }
  return {d, p};
}

}  // namespace star
