#include "star/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "star/error.hpp"
#include "star/inference.hpp"

namespace star {

std::string to_string(Generator g) { return g == Generator::mixture_cdf ? "mixture-cdf" : "negbin"; }

Generator generator_from_string(const std::string& name) {
  if (name == "mixture-cdf") return Generator::mixture_cdf;
  if (name == "negbin") return Generator::negbin;
  throw DomainError("unknown generator '" + name + "' (expected mixture-cdf or negbin)");
}

void SimulationSpec::validate() const {
  if (n < 2) throw DomainError("simulation n must be at least 2");
  if (p < 2 || p % 2 != 0) throw DomainError("simulation p must be a positive even number");
  if (beta_star.size() != 0 && beta_star.size() != p + 1) throw DomainError("beta_star must have p + 1 entries");
  if (!(std::abs(rho) < 1.0)) throw DomainError("rho must lie in (-1, 1)");
  if (!(r_star > 0.0)) throw DomainError("r_star must be positive");
  if (!(sigma_latent > 0.0)) throw DomainError("sigma_latent must be positive");
  if (n_reps < 1) throw DomainError("n_reps must be at least 1");
  if (n_test < 1) throw DomainError("n_test must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (threads < 0) throw DomainError("threads must be non-negative");
}

Vector SimulationSpec::coefficients() const { return beta_star.size() ? beta_star : true_coefficients(p); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Matrix make_design(int n, int p, double rho, std::uint64_t seed) {
  if (n < 1 || p < 1) throw DomainError("design needs n >= 1 and p >= 1");
  if (!(std::abs(rho) < 1.0)) throw DomainError("rho must lie in (-1, 1)");
  Matrix R(p, p);
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < p; ++k) R(j, k) = std::pow(rho, std::abs(j - k));
  }
  const Matrix L = R.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix Z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) Z(i, j) = normal(rng);
  }
  const Matrix C = Z * L.transpose();
  std::vector<int> perm(static_cast<std::size_t>(p));
  std::iota(perm.begin(), perm.end(), 0);
  for (int j = p - 1; j > 0; --j) {
    const auto k = static_cast<int>(rng() % static_cast<std::uint64_t>(j + 1));
    std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(k)]);
  }
  Matrix X(n, p + 1);
  X.col(0).setOnes();
  for (int j = 0; j < p; ++j) X.col(j + 1) = C.col(perm[static_cast<std::size_t>(j)]);
  return X;
}

Vector true_coefficients(int p) {
  if (p < 2 || p % 2 != 0) throw DomainError("true_coefficients needs a positive even p");
  Vector beta = Vector::Zero(p + 1);
  beta[0] = std::log(1.5);
  for (int j = 1; j <= p / 2; ++j) beta[j] = std::log(1.25);
  return beta;
}

std::vector<double> mixture_cdf() {
  constexpr int kTop = 30;
  std::vector<double> pmf(kTop + 1, 0.0);
  double pois = std::exp(-10.0);
  double pois_total = 0.0;
  for (int j = 0; j < kTop; ++j) {
    pmf[static_cast<std::size_t>(j)] += 0.5 * pois;
    pois_total += pois;
    pois *= 10.0 / (j + 1);
  }
  pmf[kTop] += 0.5 * (1.0 - pois_total);
  for (int heap = 5; heap <= 25; heap += 5) pmf[static_cast<std::size_t>(heap)] += 0.25 / 5.0;
  pmf[0] += 0.125;
  pmf[kTop] += 0.125;
  std::vector<double> cdf(pmf.size());
  std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
  cdf.back() = 1.0;
  return cdf;
}

StarModel mixture_cdf_model(const Vector& theta, double sigma) {
  const auto scheme = RoundingScheme::bounded(30);
  StarModel model;
  model.theta = theta;
  model.sigma = sigma;
  model.scheme = scheme;
  model.transform = transform_from_cdf(mixture_cdf(), 0.0, 1.0, scheme);
  return model;
}

SimulatedData gen_mixture_cdf(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed) {
  const StarModel model = mixture_cdf_model(spec.coefficients(), spec.sigma_latent);
  SimulatedData out;
  out.y = sample(model, X, seed);
  const Vector mu = X * model.theta;
  out.true_mean.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto p = pmf_table(model, mu[i], model.sigma, 30);
    double mean = 0.0;
    for (std::size_t j = 1; j < p.size(); ++j) mean += static_cast<double>(j) * p[j];
    out.true_mean[i] = mean;
  }
  return out;
}

SimulatedData gen_negbin(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed) {
  const Vector beta = spec.coefficients();
  if (X.cols() != beta.size()) throw DataError("design columns do not match the true coefficients");
  std::mt19937_64 rng(seed);
  SimulatedData out;
  out.true_mean = (X * beta).array().exp();
  out.y.resize(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::gamma_distribution<double> gamma(spec.r_star, out.true_mean[i] / spec.r_star);
    const double rate = gamma(rng);
    std::poisson_distribution<int> poisson(rate);
    out.y[static_cast<std::size_t>(i)] = rate > 0.0 ? poisson(rng) : 0;
  }
  return out;
}

SimulatedData generate(const SimulationSpec& spec, const Matrix& X, std::uint64_t seed) {
  return spec.generator == Generator::mixture_cdf ? gen_mixture_cdf(spec, X, seed) : gen_negbin(spec, X, seed);
}

double poisson_loglik(const Matrix& X, std::span<const int> y, const Vector& beta) {
  const Vector eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)];
    ll += yi * eta[i] - std::exp(eta[i]) - std::lgamma(yi + 1.0);
  }
  return ll;
}

PoissonFit fit_poisson_irls(const Matrix& X, std::span<const int> y, const std::optional<Vector>& start) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) throw DataError("negative count at row " + std::to_string(i));
  }
  const Eigen::Index n = X.rows();
  Vector beta;
  if (start) {
    beta = *start;
  } else {
    Vector eta(n);
    for (Eigen::Index i = 0; i < n; ++i) eta[i] = std::log(y[static_cast<std::size_t>(i)] + 0.1);
    beta = weighted_least_squares(X, eta);
  }
  PoissonFit fit;
  double ll = poisson_loglik(X, y, beta);
  for (int iter = 1; iter <= kPoissonMaxIter; ++iter) {
    const Vector eta = X * beta;
    const Vector mu = eta.array().exp();
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = eta[i] + (y[static_cast<std::size_t>(i)] - mu[i]) / mu[i];
    Vector next = weighted_least_squares(X, z, mu);
    double ll_next = poisson_loglik(X, y, next);
    for (int half = 0; half < 30 && !(ll_next >= ll); ++half) {
      next = 0.5 * (next + beta);
      ll_next = poisson_loglik(X, y, next);
    }
    fit.n_iter = iter;
    const double change = std::abs(ll_next - ll);
    if (ll_next >= ll) {
      beta = next;
      ll = ll_next;
    }
    if (change <= 1e-12 * (std::abs(ll) + 0.1)) {
      fit.converged = true;
      break;
    }
  }
  fit.beta = beta;
  fit.loglik = ll;
  return fit;
}

std::vector<DiscreteCell> poisson_cells(const Matrix& X, std::span<const int> y, const Vector& beta) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  const Vector eta = X * beta;
  std::vector<DiscreteCell> cells(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double lambda = std::exp(eta[static_cast<Eigen::Index>(i)]);
    const double k = static_cast<double>(y[i]);
    cells[i].below = y[i] > 0 ? gamma_q(k, lambda) : 0.0;
    cells[i].above = gamma_p(k + 1.0, lambda);
    cells[i].mass = std::exp(k * std::log(lambda) - lambda - std::lgamma(k + 1.0));
  }
  return cells;
}

Vector poisson_p_values(const Matrix& X, std::span<const int> y, const PoissonFit& fit) {
  Vector p(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const std::size_t drop[] = {static_cast<std::size_t>(c)};
    const Matrix Xr = drop_columns(X, drop);
    Vector start(Xr.cols());
    for (Eigen::Index k = 0, m = 0; k < X.cols(); ++k) {
      if (k != c) start[m++] = fit.beta[k];
    }
    const PoissonFit restricted = fit_poisson_irls(Xr, y, start);
    const double stat = std::max(0.0, 2.0 * (fit.loglik - restricted.loglik));
    p[c] = stat == 0.0 ? 1.0 : chisq_sf(stat, 1);
  }
  return p;
}

GaussLogFit fit_gauss_log(const Matrix& X, std::span<const int> y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw DataError("design rows and responses differ in length");
  const Eigen::Index n = X.rows();
  const Eigen::Index k = X.cols();
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = std::log1p(static_cast<double>(y[static_cast<std::size_t>(i)]));
  GaussLogFit fit;
  fit.beta = weighted_least_squares(X, v);
  const double rss = (v - X * fit.beta).squaredNorm();
  fit.sigma = std::sqrt(rss / static_cast<double>(n));
  fit.loglik = gauss_log_loglik(fit, X, y);
  fit.p_values = Vector::Constant(k, std::numeric_limits<double>::quiet_NaN());
  if (n > k && rss > 0.0) {
    const double s2 = rss / static_cast<double>(n - k);
    const Matrix cov = (X.transpose() * X).ldlt().solve(Matrix::Identity(k, k)) * s2;
    const boost::math::students_t t_dist(static_cast<double>(n - k));
    for (Eigen::Index j = 0; j < k; ++j) {
      const double t = std::abs(fit.beta[j]) / std::sqrt(cov(j, j));
      fit.p_values[j] = 2.0 * boost::math::cdf(boost::math::complement(t_dist, t));
    }
  }
  return fit;
}

double gauss_log_loglik(const GaussLogFit& fit, const Matrix& X, std::span<const int> y) {
  const Vector mu = X * fit.beta;
  if (fit.sigma == 0.0) return kInf;
  double ll = 0.0;
  const double s2 = fit.sigma * fit.sigma;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double v = std::log1p(static_cast<double>(y[static_cast<std::size_t>(i)]));
    const double r = v - mu[i];
    ll += -0.5 * std::log(2.0 * M_PI * s2) - r * r / (2.0 * s2) - v;
  }
  return ll;
}

Vector gauss_log_predict(const GaussLogFit& fit, const Matrix& X) {
  return ((X * fit.beta).array() + 0.5 * fit.sigma * fit.sigma).exp() - 1.0;
}

namespace {

struct Split {
  Matrix X_train, X_test;
  std::vector<int> y_train, y_test;
  Vector mean_train;
};

double rmse(const Vector& a, const Vector& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

void score_tests(ReplicationResult& r, const Vector& p_values, const Vector& beta_star, double alpha) {
  int nulls = 0, signals = 0, null_rejects = 0, signal_rejects = 0;
  for (Eigen::Index j = 1; j < beta_star.size(); ++j) {
    const bool reject = p_values[j] < alpha;
    if (beta_star[j] == 0.0) {
      ++nulls;
      null_rejects += reject;
    } else {
      ++signals;
      signal_rejects += reject;
    }
  }
  r.type1 = nulls ? static_cast<double>(null_rejects) / nulls : 0.0;
  r.power = signals ? static_cast<double>(signal_rejects) / signals : 0.0;
}

ReplicationResult run_star(const Split& s, const TransformChoice& choice, const RoundingScheme& scheme,
                           const Vector& beta_star, double alpha) {
  ReplicationResult r;
  const EmConfig config;
  const FitResult fit = fit_star(s.X_train, s.y_train, choice, scheme, {}, config);
  if (!fit.converged) throw NumericalError("EM did not converge");
  Vector p = Vector::Ones(s.X_train.cols());
  for (Eigen::Index j = 1; j < s.X_train.cols(); ++j) {
    const std::size_t drop[] = {static_cast<std::size_t>(j)};
    p[j] = lrt(fit, s.X_train, s.y_train, drop, config).p_value;
  }
  score_tests(r, p, beta_star, alpha);
  Vector fitted(s.X_train.rows());
  const Vector mu = s.X_train * fit.model.theta;
  for (Eigen::Index i = 0; i < fitted.size(); ++i) fitted[i] = expected_count_at(fit.model, mu[i], fit.model.sigma).value;
  r.rmse = rmse(fitted, s.mean_train);
  r.test_deviance = -2.0 * log_likelihood(fit.model, s.X_test, s.y_test);
  r.ok = true;
  return r;
}

ReplicationResult run_poisson(const Split& s, const Vector& beta_star, double alpha) {
  ReplicationResult r;
  const PoissonFit fit = fit_poisson_irls(s.X_train, s.y_train);
  if (!fit.converged) throw NumericalError("Poisson IRLS did not converge");
  score_tests(r, poisson_p_values(s.X_train, s.y_train, fit), beta_star, alpha);
  r.rmse = rmse((s.X_train * fit.beta).array().exp(), s.mean_train);
  r.test_deviance = -2.0 * poisson_loglik(s.X_test, s.y_test, fit.beta);
  r.ok = true;
  return r;
}

ReplicationResult run_gauss_log(const Split& s, const Vector& beta_star, double alpha) {
  ReplicationResult r;
  const GaussLogFit fit = fit_gauss_log(s.X_train, s.y_train);
  score_tests(r, fit.p_values, beta_star, alpha);
  r.rmse = rmse(gauss_log_predict(fit, s.X_train), s.mean_train);
  r.test_deviance = -2.0 * gauss_log_loglik(fit, s.X_test, s.y_test);
  r.ok = true;
  return r;
}

MetricSummary summarize(const std::vector<double>& v) {
  MetricSummary m;
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.mc_se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return m;
}

}  // namespace

std::vector<ReplicationResult> run_replication(const SimulationSpec& spec, int rep) {
  spec.validate();
  const Vector beta_star = spec.coefficients();
  const std::uint64_t rep_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
  const Matrix X = make_design(spec.n + spec.n_test, spec.p, spec.rho, derive_seed(rep_seed, 1));
  const SimulatedData data = generate(spec, X, derive_seed(rep_seed, 2));

  Split s;
  s.X_train = X.topRows(spec.n);
  s.X_test = X.bottomRows(spec.n_test);
  s.y_train.assign(data.y.begin(), data.y.begin() + spec.n);
  s.y_test.assign(data.y.begin() + spec.n, data.y.end());
  s.mean_train = data.true_mean.head(spec.n);
  const RoundingScheme scheme =
      spec.generator == Generator::mixture_cdf ? RoundingScheme::bounded(30) : RoundingScheme::unbounded();

  std::vector<ReplicationResult> out(kSimulationMethods.size());
  auto guarded = [&](std::size_t m, auto&& body) {
    try {
      out[m] = body();
    } catch (const std::exception& e) {
      out[m].ok = false;
      out[m].error = e.what();
    }
  };
  guarded(0, [&] { return run_star(s, {TransformKind::nonparametric, {}}, scheme, beta_star, spec.alpha); });
  guarded(1, [&] { return run_star(s, {TransformKind::box_cox, {}}, scheme, beta_star, spec.alpha); });
  guarded(2, [&] { return run_star(s, {TransformKind::sqrt, {}}, scheme, beta_star, spec.alpha); });
  guarded(3, [&] { return run_poisson(s, beta_star, spec.alpha); });
  guarded(4, [&] { return run_gauss_log(s, beta_star, spec.alpha); });
  return out;
}

int default_thread_count() {
  if (const char* env = std::getenv("STAR_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SimulationReport run_simulation(const SimulationSpec& spec) {
  spec.validate();
  SimulationReport report;
  report.spec = spec;
  report.replications.resize(static_cast<std::size_t>(spec.n_reps));
  const int threads = std::min(spec.threads > 0 ? spec.threads : default_thread_count(), spec.n_reps);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int rep = next++; rep < spec.n_reps; rep = next++) {
      report.replications[static_cast<std::size_t>(rep)] = run_replication(spec, rep);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t m = 0; m < kSimulationMethods.size(); ++m) {
    MethodSummary s;
    s.method = kSimulationMethods[m];
    std::vector<double> rm, dev, t1, pw;
    for (std::size_t rep = 0; rep < report.replications.size(); ++rep) {
      const auto& r = report.replications[rep][m];
      if (!r.ok) {
        ++s.n_failed;
        s.failures.push_back("replication " + std::to_string(rep) + ": " + r.error);
        continue;
      }
      rm.push_back(r.rmse);
      dev.push_back(r.test_deviance);
      t1.push_back(r.type1);
      pw.push_back(r.power);
    }
    s.n_ok = static_cast<int>(rm.size());
    s.rmse = summarize(rm);
    s.test_deviance = summarize(dev);
    s.type1 = summarize(t1);
    s.power = summarize(pw);
    report.methods.push_back(std::move(s));
  }
  return report;
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

void write_report_csv(const SimulationReport& report, std::ostream& out) {
  out << "generator,method,metric,mean,mc_se,n_ok,n_failed\n";
  for (const auto& m : report.methods) {
    const std::pair<const char*, const MetricSummary*> rows[] = {
        {"rmse", &m.rmse}, {"test_neg2loglik", &m.test_deviance}, {"type1_error", &m.type1}, {"power", &m.power}};
    for (const auto& [name, metric] : rows) {
      out << to_string(report.spec.generator) << ',' << m.method << ',' << name << ',' << fmt("%.17g", metric->mean)
          << ',' << fmt("%.17g", metric->mc_se) << ',' << m.n_ok << ',' << m.n_failed << '\n';
    }
  }
}

void write_report_table(const SimulationReport& report, std::ostream& out) {
  const auto& spec = report.spec;
  out << "generator " << to_string(spec.generator) << ", n = " << spec.n << ", p = " << spec.p
      << ", replications = " << spec.n_reps << ", alpha = " << spec.alpha << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %16s %20s %16s %16s %7s\n", "method", "RMSE", "test -2loglik", "Type I",
                "power", "failed");
  out << line;
  for (const auto& m : report.methods) {
    auto cell = [](const MetricSummary& s, const char* f) {
      return fmt(f, s.mean) + " (" + fmt(f, s.mc_se) + ")";
    };
    std::snprintf(line, sizeof line, "%-10s %16s %20s %16s %16s %7d\n", m.method.c_str(),
                  cell(m.rmse, "%.3f").c_str(), cell(m.test_deviance, "%.1f").c_str(),
                  cell(m.type1, "%.3f").c_str(), cell(m.power, "%.3f").c_str(), m.n_failed);
    out << line;
  }
  for (const auto& m : report.methods) {
    for (const auto& f : m.failures) out << m.method << " failure: " << f << "\n";
  }
}

}  // namespace star
