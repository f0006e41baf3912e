#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "star/rounding.hpp"
#include "star/special_functions.hpp"
#include "star/transform.hpp"

namespace star {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Latent Gaussian linear model z* = x'theta + eps, eps ~ N(0, sigma^2 / w_i),
/// observed through y = h(g^{-1}(z*)).
struct StarModel {
  Vector theta;
  double sigma = 1.0;
  Transformation transform;
  RoundingScheme scheme;
  /// Per-observation weights; empty means unit weights.
  Vector weights;

  /// Throws DomainError/DataError on sigma <= 0, non-positive weights, a
  /// coefficient/design mismatch (when n_cols >= 0) or a weight/row mismatch
  /// (when n_rows >= 0).
  void validate(Eigen::Index n_cols = -1, Eigen::Index n_rows = -1) const;

  double weight(Eigen::Index i) const { return weights.size() == 0 ? 1.0 : weights[i]; }
  /// Observation-level latent scale sigma / sqrt(w).
  double scale_for(double weight) const { return sigma / std::sqrt(weight); }
};

/// g(A_j) = [g(a_j), g(a_{j+1})).
Interval latent_cell(const Transformation& transform, const RoundingScheme& scheme, int j);

/// Latent cells for every response, checked against the support; errors name the row.
std::vector<Interval> latent_cells(const Transformation& transform, const RoundingScheme& scheme,
                                   std::span<const int> y);

/// log P(y = j | x) for an observation with the given weight.
double log_pmf(const StarModel& model, const Vector& x, int j, double weight = 1.0);

/// log P(y = j) at latent mean mu and latent scale `scale`.
double log_pmf_at(const StarModel& model, double mu, double scale, int j);

/// P(y = j) for j = 0..max_j at latent mean mu and scale.
std::vector<double> pmf_table(const StarModel& model, double mu, double scale, int max_j);

/// Sum of log_pmf over rows; weighted models give the pseudo-log-likelihood.
double log_likelihood(const StarModel& model, const Matrix& X, std::span<const int> y);

/// Same, with precomputed latent cells and linear predictor.
double log_likelihood_cells(std::span<const Interval> cells, const Vector& mu, double sigma,
                            const Vector& weights);

struct ExpectedCount {
  double value = 0.0;
  int truncation = 0;               // J(x)
  double truncation_error_bound = 0.0;  // (1 - q) * y_max when J(x) < y_max
};

/// Upper quantile defining the truncation point J(x) of the fitted-value sum.
inline constexpr double kExpectedCountQuantile = 0.9999;

ExpectedCount expected_count_detail(const StarModel& model, const Vector& x, double weight = 1.0);
double expected_count(const StarModel& model, const Vector& x, double weight = 1.0);
/// Fitted value at a latent mean and scale.
ExpectedCount expected_count_at(const StarModel& model, double mu, double scale);

/// h[g^{-1}{z_q*(x)}], the q-quantile of y(x). Throws DomainError for q outside (0, 1).
int latent_quantile(const StarModel& model, const Vector& x, double q, double weight = 1.0);
int latent_quantile_at(const StarModel& model, double mu, double scale, double q);

/// Draw y_i = h(g^{-1}(z_i*)) for every row of X.
std::vector<int> sample(const StarModel& model, const Matrix& X, std::uint64_t seed);

}  // namespace star
