#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "star/monotone_spline.hpp"
#include "star/rounding.hpp"

namespace star {

enum class TransformKind {
  nonparametric,  // smoothed rescaled empirical CDF
  box_cox,
  log,
  sqrt,
  identity,
  poisson_cdf,
  negbin_cdf,
  cdf,  // user-supplied marginal CDF (simulation truth)
};

std::string to_string(TransformKind kind);
/// Accepts the to_string spellings. Throws DomainError for unknown names.
TransformKind transform_kind_from_string(const std::string& name);

/// Monotone transformation g from the latent count scale to the Gaussian
/// latent scale, with the support conventions g(t) = -inf below a_1 and
/// g(t) = +inf at or above y_max + 1 for bounded schemes.
///
/// evaluate(t) = mu_z + sigma_z * core(t), where core is the Box-Cox curve or a
/// monotone spline through standard-normal quantiles of a marginal CDF.
class Transformation {
 public:
  /// (t^lambda - 1) / lambda, or log(t) at lambda = 0. Throws DomainError for lambda < 0.
  static Transformation box_cox(double lambda, double mu_z, double sigma_z, const RoundingScheme& scheme);
  /// log, sqrt (Box-Cox 1/2) or identity, unanchored.
  static Transformation fixed(TransformKind kind, const RoundingScheme& scheme);

  /// Spline transformation through knots (t_k, Phi^{-1}(F_k)) on the standard
  /// scale. Used by the empirical, parametric and user-supplied CDF builders.
  static Transformation from_quantile_knots(TransformKind kind, double mu_z, double sigma_z,
                                            std::span<const double> knot_t,
                                            std::span<const double> knot_z, const RoundingScheme& scheme,
                                            int parameter_count);

  /// Rebuild from serialized parts.
  static Transformation from_parts(TransformKind kind, double lambda, double mu_z, double sigma_z,
                                   std::optional<MonotoneSpline> spline, double support_lower,
                                   double support_upper, int parameter_count);

  double evaluate(double t) const;
  /// g^{-1}(s). Below g(a_1) the result lies in (0, a_1); above the bounded
  /// support it is y_max + 1.
  double inverse(double s) const;

  TransformKind kind() const { return kind_; }
  double lambda() const { return lambda_; }
  double mu_z() const { return mu_z_; }
  double sigma_z() const { return sigma_z_; }
  const std::optional<MonotoneSpline>& spline() const { return spline_; }
  double support_lower() const { return support_lower_; }
  double support_upper() const { return support_upper_; }
  /// Transformation parameters counted by information criteria.
  int parameter_count() const { return parameter_count_; }
  void set_parameter_count(int count) { parameter_count_ = count; }

  /// Unanchored identity on the default unbounded scheme.
  Transformation() = default;

 private:
  double core(double t) const;
  double core_inverse(double u) const;

  TransformKind kind_ = TransformKind::identity;
  double lambda_ = 1.0;
  double mu_z_ = 0.0;
  double sigma_z_ = 1.0;
  std::optional<MonotoneSpline> spline_;
  double support_lower_ = 1.0;
  double support_upper_ = kInf;
  int parameter_count_ = 0;
};

/// Anchors and rescaled ECDF of a count sample: the step transformation
/// g0(t) = mu_z + sigma_z * Phi^{-1}(n/(n+1) * F_hat(t - 1)).
struct EcdfBase {
  double mu_z = 0.0;
  double sigma_z = 1.0;
  std::vector<double> scaled_cdf;  // n/(n+1) * F_hat(j) for j = 0..max(y)
  std::vector<int> observed;       // distinct observed values, ascending
  double support_upper = kInf;

  /// F_tilde(j); 0 for j < 0 and n/(n+1) beyond the sample maximum.
  double cdf(long long j) const;
  /// The step function g0(t).
  double evaluate(double t) const;
};

/// Weighted mean, standard deviation (normalized weights, n - 1 denominator)
/// and rescaled ECDF. Weights may be empty (unit weights).
/// Throws DataError for fewer than two observations, negative counts,
/// non-positive weights or a constant sample.
EcdfBase ecdf_transform_base(std::span<const int> y, const RoundingScheme& scheme,
                             std::span<const double> weights = {});

/// Smooth monotone interpolation of g0 at the observed values: knots at t = a_j
/// for each observed count j with finite g0(a_j), so
/// Phi{(g(a_j) - mu_z) / sigma_z} = F_tilde(j - 1) there. With fewer than two such
/// knots the upper edges a_{j+1} are used instead.
Transformation fit_nonparametric_transform(std::span<const int> y, const RoundingScheme& scheme,
                                           std::span<const double> weights = {});

enum class CdfFamily { poisson, negbin };

/// g built from a Poisson(mean) or method-of-moments negative binomial CDF.
/// Throws DataError when the sample is not overdispersed for the negative binomial.
Transformation parametric_cdf_transform(CdfFamily family, std::span<const int> y, const RoundingScheme& scheme);

/// Negative binomial size r matching a mean and variance; DataError unless variance > mean.
double negbin_moment_size(double mean, double variance);

/// g from an explicit marginal CDF F(0), F(1), ... (F nondecreasing, values in
/// [0, 1]). Knots are placed at t = j + 1 wherever 0 < F(j) < 1.
Transformation transform_from_cdf(std::span<const double> cdf, double mu_z, double sigma_z,
                                  const RoundingScheme& scheme, TransformKind kind = TransformKind::cdf,
                                  int parameter_count = 0);

}  // namespace star
