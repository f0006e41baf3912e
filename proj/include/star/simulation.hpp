#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "star/em.hpp"
#include "star/inference.hpp"

namespace star {

enum class Generator { mixture_cdf, negbin };

std::string to_string(Generator g);
/// "mixture-cdf" or "negbin"; DomainError otherwise.
Generator generator_from_string(const std::string& name);

struct SimulationSpec {
  Generator generator = Generator::mixture_cdf;
  int n = 500;
  int p = 10;
  Vector beta_star;  // empty: true_coefficients(p)
  double r_star = 3.0;
  double sigma_latent = 0.7;
  double rho = 0.75;
  int n_reps = 100;
  int n_test = 1000;
  std::uint64_t seed = 0;
  double alpha = 0.10;
  int threads = 0;  // 0: STAR_THREADS or the hardware concurrency

  void validate() const;
  Vector coefficients() const;
};

/// SplitMix64 mix of (seed, stream): a counter-derived seed sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// n x (p + 1) design: rows N(0, R) with R_jk = rho^|j-k|, columns randomly
/// permuted, then an intercept column of ones prepended.
Matrix make_design(int n, int p, double rho, std::uint64_t seed);

/// [log 1.5, log 1.25 x p/2, 0 x p/2]. Throws DomainError for odd or non-positive p.
Vector true_coefficients(int p);

struct SimulatedData {
  std::vector<int> y;
  Vector true_mean;
};

/// CDF on {0, ..., 30} of 1/2 Poisson(10) + 1/4 uniform{5, 10, 15, 20, 25} + 1/4 uniform{0, 30}.
std::vector<double> mixture_cdf();

/// True STAR model behind the mixture generator: g(t) = Phi^{-1}(F(t - 1))
/// smoothed by the monotone spline, bounded at 30, with the given theta and sigma.
StarModel mixture_cdf_model(const Vector& theta, double sigma);

SimulatedData gen_mixture_cdf(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed);
/// NB(r*, lambda/(r* + lambda)) with log lambda = X beta*, drawn as a gamma-Poisson mixture.
SimulatedData gen_negbin(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed);
SimulatedData generate(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed);

struct PoissonFit {
  Vector beta;
  double loglik = 0.0;
  bool converged = false;
  int n_iter = 0;
};

inline constexpr int kPoissonMaxIter = 100;

double poisson_loglik(const Matrix& X, std::span<const int> y, const Vector& beta);
/// Log-link Poisson MLE by iteratively reweighted least squares with step halving.
PoissonFit fit_poisson_irls(const Matrix& X, std::span<const int> y, const std::optional<Vector>& start = std::nullopt);
/// Single-column-drop likelihood-ratio p-values under the Poisson likelihood.
Vector poisson_p_values(const Matrix& X, std::span<const int> y, const PoissonFit& fit);

/// Poisson(exp(x_i'beta)) predictive cells at the observed responses.
std::vector<DiscreteCell> poisson_cells(const Matrix& X, std::span<const int> y, const Vector& beta);

struct GaussLogFit {
  Vector beta;
  double sigma = 0.0;   // maximum-likelihood residual scale on log(y + 1)
  double loglik = 0.0;  // on the count scale (Jacobian included)
  Vector p_values;      // t-test p-values
};

GaussLogFit fit_gauss_log(const Matrix& X, std::span<const int> y);
/// sum_i [log N(log(y_i + 1); x_i'beta, sigma^2) - log(y_i + 1)].
double gauss_log_loglik(const GaussLogFit& fit, const Matrix& X, std::span<const int> y);
/// exp(x'beta + sigma^2 / 2) - 1.
Vector gauss_log_predict(const GaussLogFit& fit, const Matrix& X);

/// Methods compared by run_simulation, in report order.
inline const std::vector<std::string> kSimulationMethods = {"STAR-np", "STAR-bc", "STAR-sqrt", "Poisson", "Gauss-log"};

struct ReplicationResult {
  bool ok = false;
  std::string error;
  double rmse = 0.0;
  double test_deviance = 0.0;  // -2 log-likelihood on the test set
  double type1 = 0.0;          // rejection rate over true-zero coefficients
  double power = 0.0;          // rejection rate over signal coefficients
};

/// One replication: results for every method, in kSimulationMethods order.
std::vector<ReplicationResult> run_replication(const SimulationSpec& spec, int rep);

struct MetricSummary {
  double mean = 0.0;
  double mc_se = 0.0;
};

struct MethodSummary {
  std::string method;
  MetricSummary rmse;
  MetricSummary test_deviance;
  MetricSummary type1;
  MetricSummary power;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<std::string> failures;
};

struct SimulationReport {
  SimulationSpec spec;
  std::vector<MethodSummary> methods;
  std::vector<std::vector<ReplicationResult>> replications;  // [rep][method]
};

/// Runs spec.n_reps replications (in parallel), then aggregates in replication order.
SimulationReport run_simulation(const SimulationSpec& spec);

void write_report_csv(const SimulationReport& report, std::ostream& out);
void write_report_table(const SimulationReport& report, std::ostream& out);

/// Thread count from STAR_THREADS, else hardware concurrency (at least 1).
int default_thread_count();

}  // namespace star
