#include "star/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "star/error.hpp"

namespace star {

void StarModel::validate(Eigen::Index n_cols, Eigen::Index n_rows) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("model sigma must be positive and finite");
  if (n_cols >= 0 && theta.size() != n_cols) {
    throw DataError("model has " + std::to_string(theta.size()) + " coefficients but the design has " +
                    std::to_string(n_cols) + " columns");
  }
  if (weights.size() > 0) {
    if (n_rows >= 0 && weights.size() != n_rows) throw DataError("weights length does not match the design rows");
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
        throw DataError("weight at row " + std::to_string(i) + " must be positive");
      }
    }
  }
}

Interval latent_cell(const Transformation& transform, const RoundingScheme& scheme, int j) {
  return {transform.evaluate(scheme.breakpoint(j)), transform.evaluate(scheme.breakpoint(j + 1))};
}

std::vector<Interval> latent_cells(const Transformation& transform, const RoundingScheme& scheme,
                                   std::span<const int> y) {
  int top = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!scheme.in_support(y[i])) {
      throw DataError("response " + std::to_string(y[i]) + " at row " + std::to_string(i) +
                      " is outside the support of the rounding scheme");
    }
    top = std::max(top, y[i]);
  }
  std::vector<double> cut(static_cast<std::size_t>(top) + 2);
  for (int j = 0; j <= top + 1; ++j) cut[static_cast<std::size_t>(j)] = transform.evaluate(scheme.breakpoint(j));
  std::vector<Interval> cells(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto j = static_cast<std::size_t>(y[i]);
    cells[i] = {cut[j], cut[j + 1]};
  }
  return cells;
}

namespace {

double log_mass(const Interval& cell, double mu, double scale) {
  if (!(cell.lower < cell.upper)) return std::log(kMassFloor);
  return log_norm_cdf_diff({(cell.lower - mu) / scale, (cell.upper - mu) / scale});
}

double mass(const Interval& cell, double mu, double scale) {
  if (!(cell.lower < cell.upper)) return 0.0;
  return norm_mass({(cell.lower - mu) / scale, (cell.upper - mu) / scale}).value;
}

void check_support(const RoundingScheme& scheme, int j) {
  if (!scheme.in_support(j)) {
    throw DomainError("count " + std::to_string(j) + " is outside the support of the rounding scheme");
  }
}

}  // namespace

double log_pmf_at(const StarModel& model, double mu, double scale, int j) {
  check_support(model.scheme, j);
  return log_mass(latent_cell(model.transform, model.scheme, j), mu, scale);
}

double log_pmf(const StarModel& model, const Vector& x, int j, double weight) {
  if (x.size() != model.theta.size()) throw DataError("covariate vector length does not match the coefficients");
  return log_pmf_at(model, x.dot(model.theta), model.scale_for(weight), j);
}

std::vector<double> pmf_table(const StarModel& model, double mu, double scale, int max_j) {
  std::vector<double> p(static_cast<std::size_t>(std::max(max_j, -1) + 1));
  double lower = model.transform.evaluate(model.scheme.breakpoint(0));
  for (int j = 0; j <= max_j; ++j) {
    check_support(model.scheme, j);
    const double upper = model.transform.evaluate(model.scheme.breakpoint(j + 1));
    p[static_cast<std::size_t>(j)] = mass({lower, upper}, mu, scale);
    lower = upper;
  }
  return p;
}

double log_likelihood_cells(std::span<const Interval> cells, const Vector& mu, double sigma, const Vector& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double scale = weights.size() == 0 ? sigma : sigma / std::sqrt(weights[row]);
    total += log_mass(cells[i], mu[row], scale);
  }
  return total;
}

double log_likelihood(const StarModel& model, const Matrix& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  model.validate(X.cols(), X.rows());
  const auto cells = latent_cells(model.transform, model.scheme, y);
  const Vector mu = X * model.theta;
  return log_likelihood_cells(cells, mu, model.sigma, model.weights);
}

int latent_quantile_at(const StarModel& model, double mu, double scale, double q) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  const double z = mu + scale * norm_quantile(q);
  return round_value(model.transform.inverse(z), model.scheme);
}

int latent_quantile(const StarModel& model, const Vector& x, double q, double weight) {
  if (x.size() != model.theta.size()) throw DataError("covariate vector length does not match the coefficients");
  return latent_quantile_at(model, x.dot(model.theta), model.scale_for(weight), q);
}

ExpectedCount expected_count_at(const StarModel& model, double mu, double scale) {
  ExpectedCount out;
  out.truncation = latent_quantile_at(model, mu, scale, kExpectedCountQuantile);
  const auto p = pmf_table(model, mu, scale, out.truncation);
  for (std::size_t j = 1; j < p.size(); ++j) out.value += static_cast<double>(j) * p[j];
  const auto y_max = model.scheme.y_max();
  if (!y_max) {
    out.truncation_error_bound = kInf;
  } else if (out.truncation < *y_max) {
    out.truncation_error_bound = (1.0 - kExpectedCountQuantile) * *y_max;
  }
  return out;
}

ExpectedCount expected_count_detail(const StarModel& model, const Vector& x, double weight) {
  if (x.size() != model.theta.size()) throw DataError("covariate vector length does not match the coefficients");
  return expected_count_at(model, x.dot(model.theta), model.scale_for(weight));
}

double expected_count(const StarModel& model, const Vector& x, double weight) {
  return expected_count_detail(model, x, weight).value;
}

std::vector<int> sample(const StarModel& model, const Matrix& X, std::uint64_t seed) {
  model.validate(X.cols(), X.rows());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector mu = X * model.theta;
  std::vector<int> y(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double z = mu[i] + model.scale_for(model.weight(i)) * normal(rng);
    y[static_cast<std::size_t>(i)] = round_value(model.transform.inverse(z), model.scheme);
  }
  return y;
}

}  // namespace star
