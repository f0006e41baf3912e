#include "star/em.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "star/error.hpp"

namespace star {

namespace {

constexpr double kSigmaStartFloor = 1e-3;
// Box-Cox profiles run at this tolerance; the selected exponent is refit at config.tol.
constexpr double kProfileTol = 1e-8;

Vector unit_or(const Vector& w, Eigen::Index n) { return w.size() == 0 ? Vector::Ones(n) : w; }

void check_weights(const Vector& w, Eigen::Index n) {
  if (w.size() == 0) return;
  if (w.size() != n) throw DataError("weights length does not match the design rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) throw DataError("weight at row " + std::to_string(i) + " must be positive");
  }
}

Eigen::ColPivHouseholderQR<Matrix> factorize(const Matrix& Xw) {
  Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
  if (qr.rank() < Xw.cols()) {
    std::vector<std::size_t> dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < Xw.cols(); ++k) dependent.push_back(static_cast<std::size_t>(perm[k]));
    std::sort(dependent.begin(), dependent.end());
    std::string cols;
    for (auto c : dependent) cols += (cols.empty() ? "" : ", ") + std::to_string(c);
    throw SingularDesign(dependent, "singular design: column(s) " + cols + " are linearly dependent on the others");
  }
  return qr;
}

}  // namespace

void EmConfig::validate() const {
  if (!(tol > 0.0)) throw DomainError("EM tolerance must be positive");
  if (max_iter < 1) throw DomainError("EM max_iter must be at least 1");
  if (n_starts < 1) throw DomainError("EM n_starts must be at least 1");
  if (n_starts > 1 && !seed) throw DomainError("multi-start EM requires an explicit seed");
}

EStep e_step(const StarModel& model, const Matrix& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  model.validate(X.cols(), X.rows());
  const auto cells = latent_cells(model.transform, model.scheme, y);
  const Vector mu = X * model.theta;
  EStep out{Vector(X.rows()), Vector(X.rows()), Vector(X.rows())};
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    TruncatedMoments m;
    try {
      m = truncnorm_moments(mu[i], model.scale_for(model.weight(i)), cells[static_cast<std::size_t>(i)]);
    } catch (const std::exception& e) {
      throw DegenerateTruncation(static_cast<std::size_t>(i), "observation " + std::to_string(i) + ": " + e.what());
    }
    out.z1[i] = m.m1;
    out.z2[i] = m.m2;
    out.variance[i] = m.variance;
  }
  return out;
}

Vector weighted_least_squares(const Matrix& X, const Vector& d, const Vector& w) {
  if (d.size() != X.rows()) throw DataError("response length does not match the design rows");
  check_weights(w, X.rows());
  const Vector sw = unit_or(w, X.rows()).array().sqrt();
  const Matrix Xw = sw.asDiagonal() * X;
  return factorize(Xw).solve(sw.cwiseProduct(d));
}

MStep m_step(const Matrix& X, const Vector& z1, const Vector& z2, const Vector& w) {
  if (z1.size() != X.rows() || z2.size() != X.rows()) throw DataError("moment vectors do not match the design rows");
  const Vector ww = unit_or(w, X.rows());
  MStep out;
  out.theta = weighted_least_squares(X, z1, w);
  const Vector mu = X * out.theta;
  double total = 0.0;
  double scale = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    total += ww[i] * (z2[i] - 2.0 * mu[i] * z1[i] + mu[i] * mu[i]);
    scale += ww[i] * z2[i];
  }
  const double sigma2 = total / static_cast<double>(X.rows());
  if (!std::isfinite(sigma2) || sigma2 < -1e-12 * std::max(1.0, scale / static_cast<double>(X.rows()))) {
    throw NumericalError("M-step produced sigma^2 = " + std::to_string(sigma2) +
                         "; E-step moments are inconsistent (z2 < z1^2)");
  }
  out.sigma2 = sigma2;
  if (sigma2 < kSigma2Floor) {
    out.sigma2 = kSigma2Floor;
    out.at_floor = true;
  }
  return out;
}

EmProblem::EmProblem(const Matrix& X, std::span<const int> y, Transformation transform, RoundingScheme scheme,
                     Vector weights, Vector offset)
    : X_(X), transform_(std::move(transform)), scheme_(std::move(scheme)), weights_(std::move(weights)),
      offset_(std::move(offset)) {
  if (static_cast<std::size_t>(X_.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  if (X_.rows() == 0) throw DataError("empty design");
  check_weights(weights_, X_.rows());
  if (offset_.size() == 0) offset_ = Vector::Zero(X_.rows());
  if (offset_.size() != X_.rows()) throw DataError("offset length does not match the design rows");
  cells_ = latent_cells(transform_, scheme_, y);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (!(cells_[i].lower < cells_[i].upper)) {
      throw DegenerateTruncation(i, "observation " + std::to_string(i) + " falls in a latent cell of zero width");
    }
  }
  sqrt_w_ = unit_or(weights_, X_.rows()).array().sqrt();
  if (X_.cols() > 0) qr_ = factorize(sqrt_w_.asDiagonal() * X_);
}

Vector EmProblem::solve_wls(const Vector& d) const {
  if (X_.cols() == 0) return Vector(0);
  return qr_.solve(sqrt_w_.cwiseProduct(d));
}

double EmProblem::loglik(const Vector& theta, double sigma) const {
  const Vector mu = X_ * theta + offset_;
  return log_likelihood_cells(cells_, mu, sigma, weights_);
}

EmStart EmProblem::initial_start() const {
  std::vector<double> widths;
  for (const auto& c : cells_) {
    if (std::isfinite(c.lower) && std::isfinite(c.upper)) widths.push_back(c.upper - c.lower);
  }
  double width = 1.0;
  if (!widths.empty()) {
    auto mid = widths.begin() + static_cast<std::ptrdiff_t>(widths.size() / 2);
    std::nth_element(widths.begin(), mid, widths.end());
    width = *mid;
  }
  const auto n = static_cast<Eigen::Index>(cells_.size());
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = cells_[static_cast<std::size_t>(i)];
    const double lo = std::isfinite(c.lower) ? c.lower : c.upper - width;
    const double hi = std::isfinite(c.upper) ? c.upper : c.lower + width;
    z[i] = std::isfinite(lo) && std::isfinite(hi) ? 0.5 * (lo + hi) : 0.0;
  }
  EmStart start;
  start.theta = solve_wls(z - offset_);
  const Vector resid = z - X_ * start.theta - offset_;
  const Vector w = unit_or(weights_, n);
  const double s2 = (w.array() * resid.array().square()).sum() / static_cast<double>(n);
  start.sigma = std::max(std::sqrt(s2), kSigmaStartFloor);
  return start;
}

FitResult EmProblem::run(const EmStart& start, const EmConfig& config) const {
  if (!(config.tol > 0.0)) throw DomainError("EM tolerance must be positive");
  if (config.max_iter < 1) throw DomainError("EM max_iter must be at least 1");
  if (start.theta.size() != X_.cols()) throw DataError("EM start has the wrong number of coefficients");
  if (!(start.sigma > 0.0)) throw DomainError("EM start needs sigma > 0");

  const auto n = static_cast<Eigen::Index>(cells_.size());
  const Vector w = unit_or(weights_, n);
  Vector theta = start.theta;
  double sigma = start.sigma;
  double ll = loglik(theta, sigma);

  FitResult fit;
  fit.loglik_trace.push_back(ll);
  int floor_hits = 0;
  Vector z1(n);
  Vector var(n);
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    // E-step
    const Vector mu = X_ * theta + offset_;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double scale = sigma / sqrt_w_[i];
      TruncatedMoments m;
      try {
        m = truncnorm_moments(mu[i], scale, cells_[static_cast<std::size_t>(i)]);
      } catch (const std::exception& e) {
        throw DegenerateTruncation(static_cast<std::size_t>(i), "observation " + std::to_string(i) + ": " + e.what());
      }
      z1[i] = m.m1;
      var[i] = m.variance;
    }
    // M-step
    theta = solve_wls(z1 - offset_);
    const Vector resid = z1 - X_ * theta - offset_;
    double sigma2 = (w.array() * (resid.array().square() + var.array())).sum() / static_cast<double>(n);
    if (!std::isfinite(sigma2)) throw NumericalError("EM produced a non-finite sigma^2");
    if (sigma2 < kSigma2Floor) {
      sigma2 = kSigma2Floor;
      if (++floor_hits >= 2) {
        throw NumericalError("EM sigma^2 collapsed to the floor on consecutive iterations; "
                             "the latent cells are too narrow to identify the scale");
      }
    } else {
      floor_hits = 0;
    }
    sigma = std::sqrt(sigma2);

    const double ll_new = loglik(theta, sigma);
    fit.loglik_trace.push_back(ll_new);
    fit.n_iter = iter;
    const double change = ll_new - ll;
    ll = ll_new;
    if (std::abs(change) < config.tol) {
      fit.converged = true;
      break;
    }
  }

  fit.model.theta = theta;
  fit.model.sigma = sigma;
  fit.model.transform = transform_;
  fit.model.scheme = scheme_;
  fit.model.weights = weights_;
  fit.loglik = ll;
  fit.n_obs = cells_.size();
  fit.n_params = static_cast<int>(X_.cols()) + 1 + transform_.parameter_count();
  fit.start_logliks = {ll};
  set_information_criteria(fit);
  return fit;
}

void set_information_criteria(FitResult& fit) {
  const double k = fit.n_params;
  fit.aic = -2.0 * fit.loglik + 2.0 * k;
  fit.bic = -2.0 * fit.loglik + k * std::log(static_cast<double>(fit.n_obs));
}

FitResult fit_em(const Matrix& X, std::span<const int> y, const Transformation& transform,
                 const RoundingScheme& scheme, const Vector& weights, const EmConfig& config,
                 const std::optional<EmStart>& start) {
  config.validate();
  const EmProblem problem(X, y, transform, scheme, weights);
  const EmStart base = start ? *start : problem.initial_start();
  FitResult best = problem.run(base, config);
  if (config.n_starts == 1) return best;

  std::vector<double> logliks = {best.loglik};
  std::mt19937_64 rng(*config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (int s = 1; s < config.n_starts; ++s) {
    EmStart perturbed = base;
    for (Eigen::Index k = 0; k < perturbed.theta.size(); ++k) {
      perturbed.theta[k] += base.sigma * normal(rng);
    }
    perturbed.sigma = base.sigma * std::exp(uniform(rng));
    FitResult candidate = problem.run(perturbed, config);
    logliks.push_back(candidate.loglik);
    if (candidate.loglik > best.loglik) best = std::move(candidate);
  }
  best.start_logliks = std::move(logliks);
  return best;
}

std::vector<double> box_cox_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 150; ++k) grid.push_back(k / 100.0);
  return grid;
}

Transformation estimate_transform(std::span<const int> y, const TransformChoice& choice, const RoundingScheme& scheme,
                                  const Vector& weights) {
  switch (choice.kind) {
    case TransformKind::nonparametric:
      return fit_nonparametric_transform(y, scheme, std::span<const double>(weights.data(), static_cast<std::size_t>(weights.size())));
    case TransformKind::poisson_cdf: return parametric_cdf_transform(CdfFamily::poisson, y, scheme);
    case TransformKind::negbin_cdf: return parametric_cdf_transform(CdfFamily::negbin, y, scheme);
    case TransformKind::log:
    case TransformKind::sqrt:
    case TransformKind::identity: return Transformation::fixed(choice.kind, scheme);
    case TransformKind::box_cox:
      if (!choice.lambda) throw DomainError("estimate_transform: Box-Cox exponent must be given; use fit_star to profile it");
      return Transformation::box_cox(*choice.lambda, 0.0, 1.0, scheme);
    case TransformKind::cdf: break;
  }
  throw DomainError("transformation kind " + to_string(choice.kind) + " cannot be estimated from the response alone");
}

FitResult fit_star(const Matrix& X, std::span<const int> y, const TransformChoice& choice, const RoundingScheme& scheme,
                   const Vector& weights, const EmConfig& config) {
  config.validate();
  if (choice.kind != TransformKind::box_cox || choice.lambda) {
    return fit_em(X, y, estimate_transform(y, choice, scheme, weights), scheme, weights, config);
  }

  EmConfig grid_config = config;
  grid_config.tol = std::max(config.tol, kProfileTol);
  grid_config.n_starts = 1;
  std::vector<std::pair<double, double>> profile;
  std::optional<EmStart> warm;
  double best_ll = -kInf;
  double best_lambda = 0.0;
  EmStart best_start;
  for (double lambda : box_cox_grid()) {
    const EmProblem problem(X, y, Transformation::box_cox(lambda, 0.0, 1.0, scheme), scheme, weights);
    const FitResult fit = problem.run(warm ? *warm : problem.initial_start(), grid_config);
    profile.emplace_back(lambda, fit.loglik);
    warm = EmStart{fit.model.theta, fit.model.sigma};
    if (fit.loglik > best_ll) {
      best_ll = fit.loglik;
      best_lambda = lambda;
      best_start = *warm;
    }
  }

  Transformation g = Transformation::box_cox(best_lambda, 0.0, 1.0, scheme);
  g.set_parameter_count(1);
  FitResult fit = fit_em(X, y, g, scheme, weights, config, best_start);
  fit.selected_lambda = best_lambda;
  fit.lambda_profile = std::move(profile);
  return fit;
}

}  // namespace star
