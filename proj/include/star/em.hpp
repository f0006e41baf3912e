#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "star/model.hpp"

namespace star {

struct EmConfig {
  double tol = 1e-10;  // stop when |change in log-likelihood| < tol
  int max_iter = 500;
  int n_starts = 1;
  /// Required when n_starts > 1 (random restarts).
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct FitResult {
  StarModel model;
  double loglik = 0.0;
  std::vector<double> loglik_trace;  // initial value followed by one entry per iteration
  bool converged = false;
  int n_iter = 0;
  int n_params = 0;  // coefficients + sigma + transformation parameters
  std::size_t n_obs = 0;
  double aic = 0.0;
  double bic = 0.0;
  /// Final log-likelihood of every start, in start order (multi-start fits).
  std::vector<double> start_logliks;
  /// Box-Cox fits with an estimated exponent: the selected lambda and the profile.
  std::optional<double> selected_lambda;
  std::vector<std::pair<double, double>> lambda_profile;
};

/// Conditional moments of the latent data given the responses.
struct EStep {
  Vector z1;        // E[z_i* | y_i]
  Vector z2;        // E[z_i*^2 | y_i]
  Vector variance;  // Var[z_i* | y_i]
};

EStep e_step(const StarModel& model, const Matrix& X, std::span<const int> y);

/// argmin sum_i w_i (d_i - x_i'theta)^2 via column-pivoted QR of sqrt(W) X.
/// Throws SingularDesign naming the dependent columns. Empty w means unit weights.
Vector weighted_least_squares(const Matrix& X, const Vector& d, const Vector& w = {});

struct MStep {
  Vector theta;
  double sigma2 = 0.0;
  bool at_floor = false;  // raw sigma^2 fell below kSigma2Floor and was raised to it
};

inline constexpr double kSigma2Floor = 1e-10;

/// theta = WLS(X, z1, w); sigma^2 = (1/n) sum_i w_i {z2_i - 2 mu_i z1_i + mu_i^2}.
/// Throws NumericalError if sigma^2 is negative beyond rounding (z2 < z1^2).
MStep m_step(const Matrix& X, const Vector& z1, const Vector& z2, const Vector& w = {});

struct EmStart {
  Vector theta;
  double sigma = 1.0;
};

/// EM for a fixed transformation and design. Holds the latent cells and the
/// QR factorization of the weighted design so repeated fits (restarts,
/// profiles) share them. `offset` is added to the linear predictor.
class EmProblem {
 public:
  EmProblem(const Matrix& X, std::span<const int> y, Transformation transform, RoundingScheme scheme,
            Vector weights = {}, Vector offset = {});

  /// Midpoint imputation in the latent scale followed by one weighted least-squares fit.
  EmStart initial_start() const;
  /// One EM run from `start` (n_starts is ignored).
  FitResult run(const EmStart& start, const EmConfig& config) const;
  double loglik(const Vector& theta, double sigma) const;

  const Matrix& design() const { return X_; }
  std::size_t n_obs() const { return cells_.size(); }
  const std::vector<Interval>& cells() const { return cells_; }

 private:
  Vector solve_wls(const Vector& d) const;

  Matrix X_;
  std::vector<Interval> cells_;
  Transformation transform_;
  RoundingScheme scheme_;
  Vector weights_;
  Vector sqrt_w_;
  Vector offset_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
};

/// fit_em with config.n_starts starts: the deterministic start plus random
/// perturbations of it; returns the best fit and records every start's loglik.
FitResult fit_em(const Matrix& X, std::span<const int> y, const Transformation& transform,
                 const RoundingScheme& scheme, const Vector& weights, const EmConfig& config,
                 const std::optional<EmStart>& start = std::nullopt);

/// Which transformation fit_star estimates before running EM.
struct TransformChoice {
  TransformKind kind = TransformKind::nonparametric;
  /// Box-Cox exponent; unset means profile it over kBoxCoxGrid.
  std::optional<double> lambda;
};

/// Box-Cox exponent grid 0, 0.01, ..., 1.50 used when lambda is estimated.
std::vector<double> box_cox_grid();

/// Estimates the transformation from y, then runs EM. Estimated Box-Cox
/// exponents are selected by profiling the log-likelihood over box_cox_grid().
FitResult fit_star(const Matrix& X, std::span<const int> y, const TransformChoice& choice,
                   const RoundingScheme& scheme, const Vector& weights, const EmConfig& config);

/// The transformation fit_star would use (Box-Cox profiling excluded).
Transformation estimate_transform(std::span<const int> y, const TransformChoice& choice,
                                  const RoundingScheme& scheme, const Vector& weights);

/// -2 loglik + 2k and -2 loglik + k log n.
void set_information_criteria(FitResult& fit);

}  // namespace star
