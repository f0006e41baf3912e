#include "star/transform.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "star/error.hpp"
#include "star/special_functions.hpp"

namespace star {

namespace {

constexpr double kCdfTailCut = 1e-12;
constexpr int kMaxCdfKnots = 1000000;

double support_upper_for(const RoundingScheme& scheme) {
  if (!scheme.is_bounded() || !scheme.custom_breakpoints().empty()) return kInf;
  return static_cast<double>(*scheme.y_max()) + 1.0;
}

void require_default_breakpoints(const RoundingScheme& scheme) {
  if (!scheme.custom_breakpoints().empty()) {
    throw DomainError("CDF-based transformations require the default integer breakpoints");
  }
}

}  // namespace

std::string to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::nonparametric: return "nonparametric";
    case TransformKind::box_cox: return "box-cox";
    case TransformKind::log: return "log";
    case TransformKind::sqrt: return "sqrt";
    case TransformKind::identity: return "identity";
    case TransformKind::poisson_cdf: return "poisson-cdf";
    case TransformKind::negbin_cdf: return "negbin-cdf";
    case TransformKind::cdf: return "cdf";
  }
  return "unknown";
}

TransformKind transform_kind_from_string(const std::string& name) {
  static const std::map<std::string, TransformKind> kinds = {
      {"nonparametric", TransformKind::nonparametric}, {"box-cox", TransformKind::box_cox},
      {"log", TransformKind::log},                     {"sqrt", TransformKind::sqrt},
      {"identity", TransformKind::identity},           {"poisson-cdf", TransformKind::poisson_cdf},
      {"negbin-cdf", TransformKind::negbin_cdf},       {"cdf", TransformKind::cdf},
  };
  const auto it = kinds.find(name);
  if (it == kinds.end()) throw DomainError("unknown transformation kind '" + name + "'");
  return it->second;
}

Transformation Transformation::box_cox(double lambda, double mu_z, double sigma_z, const RoundingScheme& scheme) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("Box-Cox lambda must be >= 0, got " + std::to_string(lambda));
  }
  if (!(sigma_z > 0.0) || !std::isfinite(mu_z)) throw DomainError("transformation anchors need sigma_z > 0");
  Transformation g;
  g.kind_ = TransformKind::box_cox;
  g.lambda_ = lambda;
  g.mu_z_ = mu_z;
  g.sigma_z_ = sigma_z;
  g.support_lower_ = scheme.breakpoint(1);
  g.support_upper_ = support_upper_for(scheme);
  if (!(g.support_lower_ > 0.0)) throw DomainError("Box-Cox transformation needs a_1 > 0");
  return g;
}

Transformation Transformation::fixed(TransformKind kind, const RoundingScheme& scheme) {
  switch (kind) {
    case TransformKind::log: {
      Transformation g = box_cox(0.0, 0.0, 1.0, scheme);
      g.kind_ = TransformKind::log;
      return g;
    }
    case TransformKind::sqrt: {
      Transformation g = box_cox(0.5, 0.0, 1.0, scheme);
      g.kind_ = TransformKind::sqrt;
      return g;
    }
    case TransformKind::identity: {
      Transformation g;
      g.kind_ = TransformKind::identity;
      g.support_lower_ = scheme.breakpoint(1);
      g.support_upper_ = support_upper_for(scheme);
      return g;
    }
    default:
      throw DomainError("Transformation::fixed accepts log, sqrt or identity, not " + to_string(kind));
  }
}

Transformation Transformation::from_quantile_knots(TransformKind kind, double mu_z, double sigma_z,
                                                   std::span<const double> knot_t,
                                                   std::span<const double> knot_z, const RoundingScheme& scheme,
                                                   int parameter_count) {
  require_default_breakpoints(scheme);
  if (!(sigma_z > 0.0) || !std::isfinite(mu_z)) throw DomainError("transformation anchors need sigma_z > 0");
  Transformation g;
  g.kind_ = kind;
  g.mu_z_ = mu_z;
  g.sigma_z_ = sigma_z;
  g.spline_ = MonotoneSpline::fit(knot_t, knot_z);
  g.support_lower_ = 1.0;
  g.support_upper_ = support_upper_for(scheme);
  g.parameter_count_ = parameter_count;
  return g;
}

Transformation Transformation::from_parts(TransformKind kind, double lambda, double mu_z, double sigma_z,
                                          std::optional<MonotoneSpline> spline, double support_lower,
                                          double support_upper, int parameter_count) {
  if (!(sigma_z > 0.0) || !std::isfinite(mu_z)) throw DomainError("transformation anchors need sigma_z > 0");
  if (!(support_lower < support_upper)) throw DomainError("transformation support is empty");
  const bool needs_spline = kind == TransformKind::nonparametric || kind == TransformKind::poisson_cdf ||
                            kind == TransformKind::negbin_cdf || kind == TransformKind::cdf;
  if (needs_spline != spline.has_value()) {
    throw DomainError("transformation kind " + to_string(kind) + (needs_spline ? " needs" : " takes no") +
                      " spline knots");
  }
  if ((kind == TransformKind::box_cox || kind == TransformKind::log || kind == TransformKind::sqrt) &&
      !(lambda >= 0.0)) {
    throw DomainError("Box-Cox lambda must be >= 0");
  }
  Transformation g;
  g.kind_ = kind;
  g.lambda_ = kind == TransformKind::log ? 0.0 : kind == TransformKind::sqrt ? 0.5 : lambda;
  g.mu_z_ = mu_z;
  g.sigma_z_ = sigma_z;
  g.spline_ = std::move(spline);
  g.support_lower_ = support_lower;
  g.support_upper_ = support_upper;
  g.parameter_count_ = parameter_count;
  return g;
}

double Transformation::core(double t) const {
  if (spline_) return (*spline_)(t);
  if (kind_ == TransformKind::identity) return t;
  const double log_t = std::log(t);
  if (lambda_ == 0.0) return log_t;
  return std::expm1(lambda_ * log_t) / lambda_;
}

double Transformation::core_inverse(double u) const {
  if (spline_) return spline_->inverse(u);
  if (kind_ == TransformKind::identity) return u;
  if (lambda_ == 0.0) return std::exp(u);
  return std::exp(std::log1p(lambda_ * u) / lambda_);
}

double Transformation::evaluate(double t) const {
  if (std::isnan(t)) throw DomainError("transformation evaluated at NaN");
  if (t < support_lower_) return -kInf;
  if (t >= support_upper_) return kInf;
  return mu_z_ + sigma_z_ * core(t);
}

double Transformation::inverse(double s) const {
  if (std::isnan(s)) throw DomainError("inverse transformation evaluated at NaN");
  if (s == kInf) return std::isfinite(support_upper_) ? support_upper_ : kInf;
  const double lo = support_lower_;
  if (s == -kInf) return lo > 0.0 ? 0.0 : -kInf;
  const double u = (s - mu_z_) / sigma_z_;
  const double core_lo = core(lo);
  if (u < core_lo) {
    // Any value below a_1 rounds to zero; keep the map monotone and continuous.
    return lo > 0.0 ? lo * std::exp(u - core_lo) : lo + (u - core_lo);
  }
  if (std::isfinite(support_upper_) && u >= core(support_upper_)) return support_upper_;
  return core_inverse(u);
}

double EcdfBase::cdf(long long j) const {
  if (j < 0) return 0.0;
  if (j >= static_cast<long long>(scaled_cdf.size())) return scaled_cdf.back();
  return scaled_cdf[static_cast<std::size_t>(j)];
}

double EcdfBase::evaluate(double t) const {
  if (t < 1.0) return -kInf;
  if (t >= support_upper) return kInf;
  const double f = cdf(static_cast<long long>(std::floor(t)) - 1);
  if (f <= 0.0) return -kInf;
  return mu_z + sigma_z * norm_quantile(f);
}

EcdfBase ecdf_transform_base(std::span<const int> y, const RoundingScheme& scheme, std::span<const double> weights) {
  require_default_breakpoints(scheme);
  const std::size_t n = y.size();
  if (n < 2) throw DataError("transformation estimate needs at least two observations");
  if (!weights.empty() && weights.size() != n) throw DataError("weights length does not match the response");

  double weight_total = 0.0;
  int y_max_seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!scheme.in_support(y[i])) {
      throw DataError("response " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                      " is outside the rounding support");
    }
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw DataError("weight at row " + std::to_string(i) + " must be positive");
    }
    weight_total += w;
    y_max_seen = std::max(y_max_seen, y[i]);
  }

  // Normalized weights sum to n, so equal weights reproduce the unweighted formulas.
  const double scale = static_cast<double>(n) / weight_total;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += (weights.empty() ? 1.0 : weights[i] * scale) * y[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y[i] - mean;
    ss += (weights.empty() ? 1.0 : weights[i] * scale) * d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DataError("degenerate response: sample standard deviation is zero");

  std::vector<double> mass(static_cast<std::size_t>(y_max_seen) + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mass[static_cast<std::size_t>(y[i])] += weights.empty() ? 1.0 : weights[i] * scale;
  }

  EcdfBase base;
  base.mu_z = mean;
  base.sigma_z = sd;
  base.support_upper = support_upper_for(scheme);
  base.scaled_cdf.resize(mass.size());
  const double shrink = static_cast<double>(n) / (static_cast<double>(n) + 1.0);
  double running = 0.0;
  for (std::size_t j = 0; j < mass.size(); ++j) {
    running += mass[j];
    if (mass[j] > 0.0) base.observed.push_back(static_cast<int>(j));
    base.scaled_cdf[j] = shrink * std::min(1.0, running / static_cast<double>(n));
  }
  base.scaled_cdf.back() = shrink;
  return base;
}

Transformation fit_nonparametric_transform(std::span<const int> y, const RoundingScheme& scheme,
                                           std::span<const double> weights) {
  const EcdfBase base = ecdf_transform_base(y, scheme, weights);
  if (base.observed.size() < 2) throw DataError("transformation estimate needs two distinct response values");
  std::vector<double> knot_t;
  std::vector<double> knot_z;
  for (int j : base.observed) {
    const double t = scheme.breakpoint(j);
    const double f = base.cdf(j - 1);
    if (!std::isfinite(t) || !(f > 0.0)) continue;
    knot_t.push_back(t);
    knot_z.push_back(norm_quantile(f));
  }
  if (knot_t.size() < 2) {
    // Two distinct values with nothing between: use the upper cell edges instead.
    knot_t.clear();
    knot_z.clear();
    for (int j : base.observed) {
      const double t = scheme.breakpoint(j + 1);
      if (!std::isfinite(t)) continue;
      knot_t.push_back(t);
      knot_z.push_back(norm_quantile(base.cdf(j)));
    }
    if (knot_t.size() < 2) {
      const int top = base.observed.back();
      knot_t.push_back(scheme.breakpoint(top) + 1.0);
      knot_z.push_back(norm_quantile(base.cdf(top)));
    }
  }
  return Transformation::from_quantile_knots(TransformKind::nonparametric, base.mu_z, base.sigma_z, knot_t, knot_z,
                                             scheme, static_cast<int>(base.observed.size()));
}

double negbin_moment_size(double mean, double variance) {
  if (!(variance > mean)) {
    throw DataError("underdispersed for NegBin moments: variance " + std::to_string(variance) +
                    " does not exceed mean " + std::to_string(mean));
  }
  return mean * mean / (variance - mean);
}

Transformation transform_from_cdf(std::span<const double> cdf, double mu_z, double sigma_z,
                                  const RoundingScheme& scheme, TransformKind kind, int parameter_count) {
  const double upper = support_upper_for(scheme);
  std::vector<double> knot_t;
  std::vector<double> knot_z;
  for (std::size_t j = 0; j < cdf.size(); ++j) {
    const double f = cdf[j];
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("CDF values must lie in [0, 1]");
    if (j > 0 && f < cdf[j - 1]) throw DomainError("CDF values must be nondecreasing");
    const double t = static_cast<double>(j) + 1.0;
    if (t > upper) break;
    if (f > 0.0 && f < 1.0) {
      knot_t.push_back(t);
      knot_z.push_back(norm_quantile(f));
    }
  }
  if (knot_t.size() < 2) throw DataError("CDF has fewer than two interior values; cannot build a transformation");
  return Transformation::from_quantile_knots(kind, mu_z, sigma_z, knot_t, knot_z, scheme, parameter_count);
}

Transformation parametric_cdf_transform(CdfFamily family, std::span<const int> y, const RoundingScheme& scheme) {
  const EcdfBase base = ecdf_transform_base(y, scheme);
  const double mean = base.mu_z;
  const double variance = base.sigma_z * base.sigma_z;
  const int y_top = base.observed.back();

  std::vector<double> cdf;
  auto keep_going = [&](int j, double f) {
    if (scheme.is_bounded()) return j < *scheme.y_max();
    return (j < y_top || 1.0 - f >= kCdfTailCut) && j < kMaxCdfKnots;
  };

  if (family == CdfFamily::poisson) {
    for (int j = 0;; ++j) {
      const double f = gamma_q(static_cast<double>(j) + 1.0, mean);
      cdf.push_back(f);
      if (!keep_going(j, f)) break;
    }
    return transform_from_cdf(cdf, mean, base.sigma_z, scheme, TransformKind::poisson_cdf, 1);
  }

  const double r = negbin_moment_size(mean, variance);
  const double p = r / (r + mean);
  double log_pmf = r * std::log(p);
  double running = 0.0;
  for (int j = 0;; ++j) {
    running += std::exp(log_pmf);
    const double f = std::min(running, 1.0);
    cdf.push_back(f);
    if (!keep_going(j, f)) break;
    log_pmf += std::log((j + r) / (j + 1.0)) + std::log1p(-p);
  }
  return transform_from_cdf(cdf, mean, base.sigma_z, scheme, TransformKind::negbin_cdf, 2);
}

}  // namespace star
