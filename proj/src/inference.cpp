#include "star/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "star/error.hpp"

namespace star {

namespace {

constexpr double kStatFailure = 1e-6;
constexpr double kEndpointTol = 1e-6;
// Bracket half-widths in standard errors: start at 4, double, stop at 20.
constexpr double kBracketSteps[] = {4.0, 8.0, 16.0, 20.0};
constexpr double kMaxBracket = 20.0;

std::vector<std::size_t> remaining_columns(Eigen::Index cols, std::span<const std::size_t> drop) {
  std::vector<std::size_t> keep;
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (std::find(drop.begin(), drop.end(), static_cast<std::size_t>(c)) == drop.end()) {
      keep.push_back(static_cast<std::size_t>(c));
    }
  }
  return keep;
}

Vector select(const Vector& v, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(idx[k])];
  return out;
}

double criterion_value(const FitResult& fit, Criterion c) { return c == Criterion::aic ? fit.aic : fit.bic; }

}  // namespace

Matrix drop_columns(const Matrix& X, std::span<const std::size_t> drop) {
  for (auto c : drop) {
    if (c >= static_cast<std::size_t>(X.cols())) throw DataError("column " + std::to_string(c) + " is not in the design");
  }
  const auto keep = remaining_columns(X.cols(), drop);
  Matrix out(X.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(keep[k]));
  return out;
}

LrtResult lrt(const FitResult& full, const Matrix& X, std::span<const int> y, std::span<const std::size_t> drop,
              const EmConfig& config) {
  std::vector<std::size_t> unique(drop.begin(), drop.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  LrtResult out;
  out.full_loglik = full.loglik;
  out.df = static_cast<int>(unique.size());
  if (unique.empty()) {
    out.restricted_loglik = full.loglik;
    out.restricted = full;
    return out;
  }
  const Matrix Xr = drop_columns(X, unique);
  const auto keep = remaining_columns(X.cols(), unique);
  EmConfig single = config;
  single.n_starts = 1;
  const EmProblem problem(Xr, y, full.model.transform, full.model.scheme, full.model.weights);
  out.restricted = problem.run({select(full.model.theta, keep), full.model.sigma}, single);
  if (config.n_starts > 1) {
    FitResult multi = fit_em(Xr, y, full.model.transform, full.model.scheme, full.model.weights, config);
    if (multi.loglik > out.restricted.loglik) out.restricted = std::move(multi);
  }
  out.restricted_loglik = out.restricted.loglik;
  double stat = 2.0 * (out.full_loglik - out.restricted_loglik);
  if (stat < -kStatFailure) {
    throw NumericalError("likelihood-ratio statistic " + std::to_string(stat) +
                         " is negative: the full model was not fitted to its maximum");
  }
  out.stat = std::max(stat, 0.0);
  out.p_value = out.stat == 0.0 ? 1.0 : chisq_sf(out.stat, out.df);
  return out;
}

Vector marginal_p_values(const FitResult& fit, const Matrix& X, std::span<const int> y, const EmConfig& config) {
  Vector p(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const std::size_t drop[] = {static_cast<std::size_t>(c)};
    p[c] = lrt(fit, X, y, drop, config).p_value;
  }
  return p;
}

Vector coefficient_standard_errors(const FitResult& fit, const Matrix& X, std::span<const int> y) {
  const auto& m = fit.model;
  const auto cells = latent_cells(m.transform, m.scheme, y);
  const Eigen::Index k = X.cols() + 1;
  Vector par(k);
  par.head(X.cols()) = m.theta;
  par[X.cols()] = std::log(m.sigma);
  auto ll = [&](const Vector& q) {
    const Vector mu = X * q.head(X.cols());
    return log_likelihood_cells(cells, mu, std::exp(q[X.cols()]), m.weights);
  };
  Vector h(k);
  for (Eigen::Index i = 0; i < k; ++i) h[i] = 1e-4 * std::max(1.0, std::abs(par[i]));
  const double f0 = ll(par);
  Matrix H(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector p = par;
    p[i] = par[i] + h[i];
    const double fp = ll(p);
    p[i] = par[i] - h[i];
    const double fm = ll(p);
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (Eigen::Index j = 0; j < i; ++j) {
      Vector q = par;
      q[i] += h[i];
      q[j] += h[j];
      const double fpp = ll(q);
      q[j] = par[j] - h[j];
      const double fpm = ll(q);
      q[i] = par[i] - h[i];
      const double fmm = ll(q);
      q[j] = par[j] + h[j];
      const double fmp = ll(q);
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
    }
  }
  const Matrix cov = (-H).inverse();
  Vector se(X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    se[i] = cov(i, i) > 0.0 ? std::sqrt(cov(i, i)) : std::numeric_limits<double>::quiet_NaN();
  }
  return se;
}

namespace {

// Profile log-likelihood in one coefficient, with warm starts carried between calls.
class Profile {
 public:
  Profile(const FitResult& fit, std::size_t coefficient, const Matrix& X, std::span<const int> y,
          const EmConfig& config)
      : fit_(fit), coefficient_(coefficient), X_(X), y_(y), config_(config) {
    config_.n_starts = 1;
    const std::size_t drop[] = {coefficient};
    Xr_ = drop_columns(X, drop);
    keep_ = remaining_columns(X.cols(), drop);
  }

  double operator()(double value, EmStart& start) const {
    const Vector offset = value * X_.col(static_cast<Eigen::Index>(coefficient_));
    const EmProblem problem(Xr_, y_, fit_.model.transform, fit_.model.scheme, fit_.model.weights, offset);
    const FitResult r = problem.run(start, config_);
    start = {r.model.theta, r.model.sigma};
    return r.loglik;
  }

  EmStart mle_start() const { return {select(fit_.model.theta, keep_), fit_.model.sigma}; }

 private:
  const FitResult& fit_;
  std::size_t coefficient_;
  const Matrix& X_;
  std::span<const int> y_;
  EmConfig config_;
  Matrix Xr_;
  std::vector<std::size_t> keep_;
};

}  // namespace

double profile_loglik(const FitResult& fit, std::size_t coefficient, double value, const Matrix& X,
                      std::span<const int> y, const EmConfig& config) {
  if (coefficient >= static_cast<std::size_t>(X.cols())) throw DataError("coefficient index out of range");
  const Profile profile(fit, coefficient, X, y, config);
  EmStart start = profile.mle_start();
  return profile(value, start);
}

ConfidenceInterval confidence_interval(const FitResult& fit, std::size_t coefficient, double level, const Matrix& X,
                                       std::span<const int> y, const EmConfig& config) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  if (coefficient >= static_cast<std::size_t>(X.cols())) throw DataError("coefficient index out of range");
  const Profile profile(fit, coefficient, X, y, config);
  const double estimate = fit.model.theta[static_cast<Eigen::Index>(coefficient)];
  const double target = fit.loglik - 0.5 * chisq_quantile(level, 1);
  double se = coefficient_standard_errors(fit, X, y)[static_cast<Eigen::Index>(coefficient)];
  if (!std::isfinite(se) || !(se > 0.0)) se = std::max(1e-3, 0.1 * std::abs(estimate));

  ConfidenceInterval ci;
  ci.coefficient = coefficient;
  ci.level = level;
  ci.estimate = estimate;
  for (int side : {-1, 1}) {
    EmStart start = profile.mle_start();
    double inside = estimate;
    double outside = estimate;
    bool found = false;
    for (double mult : kBracketSteps) {
      const double b = estimate + side * mult * se;
      EmStart s = start;
      const double value = profile(b, s);
      if (value < target) {
        outside = b;
        found = true;
        break;
      }
      inside = b;
      start = s;
    }
    if (!found) {
      throw NumericalError(std::string("unbounded profile: the ") + (side < 0 ? "lower" : "upper") +
                           " crossing for coefficient " + std::to_string(coefficient) + " lies beyond " +
                           std::to_string(kMaxBracket) + " standard errors");
    }
    EmStart inside_start = start;
    while (std::abs(outside - inside) > kEndpointTol) {
      const double mid = 0.5 * (inside + outside);
      EmStart s = inside_start;
      if (profile(mid, s) >= target) {
        inside = mid;
        inside_start = s;
      } else {
        outside = mid;
      }
    }
    const double endpoint = 0.5 * (inside + outside);
    (side < 0 ? ci.lower : ci.upper) = endpoint;
  }
  return ci;
}

EliminationResult backward_elimination(const Matrix& X, std::span<const int> y, Criterion criterion,
                                       const TransformChoice& choice, const RoundingScheme& scheme,
                                       const Vector& weights, const EmConfig& config,
                                       std::span<const std::size_t> keep) {
  Transformation g;
  if (choice.kind == TransformKind::box_cox && !choice.lambda) {
    const FitResult full = fit_star(X, y, choice, scheme, weights, config);
    g = full.model.transform;
  } else {
    g = estimate_transform(y, choice, scheme, weights);
  }

  EliminationResult out;
  for (Eigen::Index c = 0; c < X.cols(); ++c) out.selected.push_back(static_cast<std::size_t>(c));
  auto fit_subset = [&](const std::vector<std::size_t>& cols, const std::optional<EmStart>& start) {
    const Matrix Xs = drop_columns(X, remaining_columns(X.cols(), cols));
    return fit_em(Xs, y, g, scheme, weights, config, start);
  };
  out.fit = fit_subset(out.selected, std::nullopt);
  out.initial_criterion = criterion_value(out.fit, criterion);
  double current = out.initial_criterion;

  for (;;) {
    std::optional<std::size_t> best_pos;
    FitResult best_fit;
    double best_value = current;
    for (std::size_t pos = 0; pos < out.selected.size(); ++pos) {
      const std::size_t col = out.selected[pos];
      if (std::find(keep.begin(), keep.end(), col) != keep.end()) continue;
      std::vector<std::size_t> cols = out.selected;
      cols.erase(cols.begin() + static_cast<std::ptrdiff_t>(pos));
      std::vector<std::size_t> positions;
      for (std::size_t k = 0; k < out.selected.size(); ++k) {
        if (k != pos) positions.push_back(k);
      }
      FitResult candidate = fit_subset(cols, EmStart{select(out.fit.model.theta, positions), out.fit.model.sigma});
      const double value = criterion_value(candidate, criterion);
      if (value < best_value) {
        best_value = value;
        best_pos = pos;
        best_fit = std::move(candidate);
      }
    }
    if (!best_pos) break;
    out.steps.push_back({out.selected[*best_pos], best_value});
    out.selected.erase(out.selected.begin() + static_cast<std::ptrdiff_t>(*best_pos));
    out.fit = std::move(best_fit);
    current = best_value;
  }
  return out;
}

Matrix randomized_quantile_residuals(std::span<const DiscreteCell> cells, int n_sets, std::uint64_t seed) {
  if (n_sets < 1) throw DomainError("at least one residual set is required");
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(cells.size());
  Matrix r(n, n_sets);
  for (int s = 0; s < n_sets; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // U in (0, 1) from the top 53 bits.
      const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
      const auto& c = cells[static_cast<std::size_t>(i)];
      const double lower = c.below + u * c.mass;
      const double upper = c.above + (1.0 - u) * c.mass;
      if (lower <= upper) {
        r(i, s) = norm_quantile(std::clamp(lower, kMassFloor, 0.5));
      } else {
        r(i, s) = -norm_quantile(std::clamp(upper, kMassFloor, 0.5));
      }
    }
  }
  return r;
}

std::vector<DiscreteCell> star_cells(const StarModel& model, const Matrix& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  model.validate(X.cols(), X.rows());
  const auto latent = latent_cells(model.transform, model.scheme, y);
  const Vector mu = X * model.theta;
  std::vector<DiscreteCell> cells(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double scale = model.scale_for(model.weight(row));
    const double a = (latent[i].lower - mu[row]) / scale;
    const double b = (latent[i].upper - mu[row]) / scale;
    cells[i].below = norm_cdf(a);
    cells[i].above = norm_sf(b);
    cells[i].mass = a < b ? norm_mass({a, b}).value : 0.0;
  }
  return cells;
}

Matrix dunn_smyth_residuals(const FitResult& fit, const Matrix& X, std::span<const int> y, int n_sets,
                            std::uint64_t seed) {
  const auto cells = star_cells(fit.model, X, y);
  return randomized_quantile_residuals(cells, n_sets, seed);
}

}  // namespace star
