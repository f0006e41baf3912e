#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "star/em.hpp"

namespace star {

struct LrtResult {
  double stat = 0.0;  // -2 log Lambda, clamped at 0
  int df = 0;
  double p_value = 1.0;
  double full_loglik = 0.0;
  double restricted_loglik = 0.0;
  FitResult restricted;
};

/// Likelihood-ratio test of the columns in `drop` against the fitted model
/// `full`, refitting the restricted model with the same transformation.
/// Throws NumericalError if the restricted fit beats the full fit by more than 1e-6.
LrtResult lrt(const FitResult& full, const Matrix& X, std::span<const int> y, std::span<const std::size_t> drop,
              const EmConfig& config);

/// Single-column-drop likelihood-ratio p-value for every coefficient.
Vector marginal_p_values(const FitResult& fit, const Matrix& X, std::span<const int> y, const EmConfig& config);

/// Design matrix without the listed columns.
Matrix drop_columns(const Matrix& X, std::span<const std::size_t> drop);

/// Observed information in (theta, log sigma) by central differences of the
/// log-likelihood, inverted; returns the standard errors of theta.
Vector coefficient_standard_errors(const FitResult& fit, const Matrix& X, std::span<const int> y);

struct ConfidenceInterval {
  std::size_t coefficient = 0;
  double level = 0.9;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Profile-likelihood interval {b : l_p(b) > l_max - chisq_quantile(level, 1) / 2}.
/// Both crossings are bracketed from +-4 standard errors, doubling up to +-20,
/// and bisected to 1e-6. Throws NumericalError("unbounded profile") when a
/// side has no crossing inside the bracket.
ConfidenceInterval confidence_interval(const FitResult& fit, std::size_t coefficient, double level, const Matrix& X,
                                       std::span<const int> y, const EmConfig& config);

/// Profile log-likelihood at theta_coefficient = value (all other parameters refit).
double profile_loglik(const FitResult& fit, std::size_t coefficient, double value, const Matrix& X,
                      std::span<const int> y, const EmConfig& config);

enum class Criterion { aic, bic };

struct EliminationStep {
  std::size_t dropped = 0;  // column index in the original design
  double criterion = 0.0;   // criterion value after the drop
};

struct EliminationResult {
  std::vector<std::size_t> selected;  // surviving columns of the original design, ascending
  double initial_criterion = 0.0;
  std::vector<EliminationStep> steps;
  FitResult fit;  // fit of the selected model
};

/// Greedy backward elimination: repeatedly drop the single column whose removal
/// lowers the criterion most, until no removal lowers it. Columns listed in
/// `keep` (the intercept) are never dropped. The transformation is estimated
/// once from y and shared by every submodel.
EliminationResult backward_elimination(const Matrix& X, std::span<const int> y, Criterion criterion,
                                       const TransformChoice& choice, const RoundingScheme& scheme,
                                       const Vector& weights, const EmConfig& config,
                                       std::span<const std::size_t> keep = std::vector<std::size_t>{0});

/// Discrete predictive distribution at one observation: P(y < y_i), P(y = y_i), P(y > y_i).
struct DiscreteCell {
  double below = 0.0;
  double mass = 0.0;
  double above = 0.0;
};

/// Randomized quantile residuals r = Phi^{-1}(below + U * mass), n x n_sets,
/// computed from whichever tail is smaller. U is drawn row by row within each set.
Matrix randomized_quantile_residuals(std::span<const DiscreteCell> cells, int n_sets, std::uint64_t seed);

/// Predictive cells of the fitted STAR model at the observed responses.
std::vector<DiscreteCell> star_cells(const StarModel& model, const Matrix& X, std::span<const int> y);

Matrix dunn_smyth_residuals(const FitResult& fit, const Matrix& X, std::span<const int> y, int n_sets,
                            std::uint64_t seed);

}  // namespace star
