#include "star/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "star/error.hpp"
#include "star/inference.hpp"
#include "star/io.hpp"
#include "star/simulation.hpp"

namespace star {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNoConvergence = 2;

struct FitOptions {
  std::string data;
  std::string response;
  std::string transform = "np";
  std::optional<double> lambda;
  std::optional<int> y_max;
  bool unbounded = false;
  std::optional<std::string> weights;
  double tol = 1e-10;
  int max_iter = 500;
  int starts = 1;
  std::optional<std::uint64_t> seed;
};

struct Options {
  FitOptions fit;
  std::string out_path;
  std::string model_out = "model.json";
  std::string model_path;
  std::string table_path;
  std::string qq_path;
  bool ci = false;
  double level = 0.9;
  bool pvalues = false;
  int sets = 10;
  std::string drop;
  std::string criterion = "bic";
  std::string generator;
  int reps = 100;
  int n = 500;
  int p = 10;
  int n_test = 1000;
  double r_star = 3.0;
  double sigma = 0.7;
  double rho = 0.75;
  double alpha = 0.10;
  int threads = 0;
};

TransformChoice parse_choice(const FitOptions& o) {
  static const std::map<std::string, TransformKind> kinds = {
      {"np", TransformKind::nonparametric}, {"box-cox", TransformKind::box_cox},
      {"sqrt", TransformKind::sqrt},        {"log", TransformKind::log},
      {"identity", TransformKind::identity}, {"poisson", TransformKind::poisson_cdf},
      {"negbin", TransformKind::negbin_cdf},
  };
  TransformChoice c;
  c.kind = kinds.at(o.transform);
  if (o.lambda) {
    if (c.kind != TransformKind::box_cox) throw DataError("--lambda applies only to --transform box-cox");
    c.lambda = o.lambda;
  }
  return c;
}

EmConfig em_config(const FitOptions& o) {
  EmConfig c;
  c.tol = o.tol;
  c.max_iter = o.max_iter;
  c.n_starts = o.starts;
  c.seed = o.seed;
  c.validate();
  return c;
}

RoundingScheme scheme_for(const FitOptions& o, const Dataset& d) {
  if (o.unbounded) return RoundingScheme::unbounded();
  return RoundingScheme::bounded(d.y_max);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Dataset read_for_model(const ModelDocument& doc, const std::string& path, bool require_response) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv_encoded(in, doc.encoding, doc.response, doc.weight_column, require_response);
}

// Writes to the named file, or to `out` when the path is empty or "-".
template <class F>
void emit(const std::string& path, std::ostream& out, F&& body) {
  if (path.empty() || path == "-") {
    body(out);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  body(f);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void add_fit_flags(CLI::App* cmd, FitOptions& o) {
  cmd->add_option("--data", o.data, "input CSV")->required();
  cmd->add_option("--response", o.response, "response column")->required();
  cmd->add_option("--transform", o.transform, "transformation")
      ->check(CLI::IsMember({"np", "box-cox", "sqrt", "log", "identity", "poisson", "negbin"}));
  cmd->add_option("--lambda", o.lambda, "fixed Box-Cox exponent (default: profile over 0, 0.01, ..., 1.5)");
  cmd->add_option("--y-max", o.y_max, "upper bound of the response (default: its maximum)");
  cmd->add_flag("--unbounded", o.unbounded, "no upper bound on the response");
  cmd->add_option("--weights", o.weights, "observation weight column");
  cmd->add_option("--tol", o.tol, "log-likelihood tolerance")->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", o.max_iter, "maximum EM iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--starts", o.starts, "EM starts")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "random seed")->required();
}

int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  const auto& f = o.fit;
  if (f.unbounded && f.y_max) throw DataError("--unbounded and --y-max are mutually exclusive");
  const Dataset d = read_csv(f.data, f.response, f.weights, f.y_max);
  const RoundingScheme scheme = scheme_for(f, d);
  const EmConfig config = em_config(f);
  const FitResult fit = fit_star(d.X, d.y, parse_choice(f), scheme, d.weights, config);
  const ModelDocument doc = make_document(fit, d, *f.seed, config);
  emit(o.model_out, out, [&](std::ostream& s) { s << to_json_string(doc); });

  Vector p_values;
  if (o.pvalues) p_values = marginal_p_values(fit, d.X, d.y, config);
  std::vector<ConfidenceInterval> cis;
  if (o.ci) {
    for (Eigen::Index k = 0; k < d.X.cols(); ++k) {
      cis.push_back(confidence_interval(fit, static_cast<std::size_t>(k), o.level, d.X, d.y, config));
    }
  }

  std::ostream& report = o.model_out.empty() || o.model_out == "-" ? err : out;
  report << "transform " << to_string(fit.model.transform.kind());
  if (fit.selected_lambda) report << " (lambda " << *fit.selected_lambda << ")";
  report << ", n = " << fit.n_obs << ", loglik = " << fixed(fit.loglik, 4) << ", AIC = " << fixed(fit.aic, 2)
         << ", BIC = " << fixed(fit.bic, 2) << ", sigma = " << general(fit.model.sigma) << ", iterations = "
         << fit.n_iter << (fit.converged ? "" : " (NOT CONVERGED)") << "\n";
  emit(o.table_path, report, [&](std::ostream& s) {
    s << "term,estimate";
    if (o.ci) s << ",ci_lower,ci_upper";
    if (o.pvalues) s << ",p_value";
    s << "\n";
    for (Eigen::Index k = 0; k < d.X.cols(); ++k) {
      s << d.names[static_cast<std::size_t>(k)] << "," << format_double(fit.model.theta[k]);
      if (o.ci) s << "," << format_double(cis[static_cast<std::size_t>(k)].lower) << ","
                  << format_double(cis[static_cast<std::size_t>(k)].upper);
      if (o.pvalues) s << "," << format_double(p_values[k]);
      s << "\n";
    }
  });
  if (!fit.converged) {
    err << "warning: EM did not converge within " << config.max_iter << " iterations\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const ModelDocument doc = parse_model(read_file(o.model_path));
  const Dataset d = read_for_model(doc, o.fit.data, false);
  emit(o.out_path, out, [&](std::ostream& s) {
    s << "row,expected,q05,q50,q95\n";
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
      const double w = d.weights.size() ? d.weights[i] : 1.0;
      const Vector x = d.X.row(i).transpose();
      s << i + 1 << "," << format_double(expected_count(doc.model, x, w)) << ","
        << latent_quantile(doc.model, x, 0.05, w) << "," << latent_quantile(doc.model, x, 0.50, w) << ","
        << latent_quantile(doc.model, x, 0.95, w) << "\n";
    }
  });
  return kExitOk;
}

FitResult refit_document(const ModelDocument& doc, const Dataset& d) {
  EmConfig config;
  config.tol = doc.fit.tol;
  config.max_iter = doc.fit.max_iter;
  StarModel model = doc.model;
  model.weights = d.weights;
  return fit_em(d.X, d.y, model.transform, model.scheme, d.weights, config, EmStart{model.theta, model.sigma});
}

int cmd_diagnose(const Options& o, std::ostream& out) {
  const ModelDocument doc = parse_model(read_file(o.model_path));
  const Dataset d = read_for_model(doc, o.fit.data, true);
  if (o.sets < 1) throw DataError("--sets must be at least 1");
  StarModel model = doc.model;
  model.weights = d.weights;
  const auto cells = star_cells(model, d.X, d.y);
  const Matrix r = randomized_quantile_residuals(cells, o.sets, *o.fit.seed);
  std::vector<KsResult> ks;
  for (Eigen::Index s = 0; s < r.cols(); ++s) {
    const Vector col = r.col(s);
    ks.push_back(ks_test_normal(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))));
  }
  emit(o.out_path, out, [&](std::ostream& s) {
    s << "row";
    for (Eigen::Index k = 0; k < r.cols(); ++k) s << ",r" << k + 1;
    s << "\n";
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      s << i + 1;
      for (Eigen::Index k = 0; k < r.cols(); ++k) s << "," << format_double(r(i, k));
      s << "\n";
    }
    s << "ks_statistic";
    for (const auto& k : ks) s << "," << format_double(k.statistic);
    s << "\nks_p_value";
    for (const auto& k : ks) s << "," << format_double(k.p_value);
    s << "\n";
  });
  if (!o.qq_path.empty()) {
    emit(o.qq_path, out, [&](std::ostream& s) {
      s << "set,theoretical,sample\n";
      const auto n = r.rows();
      for (Eigen::Index k = 0; k < r.cols(); ++k) {
        std::vector<double> v(r.col(k).data(), r.col(k).data() + n);
        std::sort(v.begin(), v.end());
        for (Eigen::Index i = 0; i < n; ++i) {
          const double q = norm_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n));
          s << k + 1 << "," << format_double(q) << "," << format_double(v[static_cast<std::size_t>(i)]) << "\n";
        }
      }
    });
  }
  return kExitOk;
}

std::vector<std::string> split_names(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream s(list);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

int cmd_test(const Options& o, std::ostream& out) {
  const ModelDocument doc = parse_model(read_file(o.model_path));
  const Dataset d = read_for_model(doc, o.fit.data, true);
  std::vector<std::size_t> drop;
  for (const auto& name : split_names(o.drop)) {
    const auto it = std::find(d.names.begin(), d.names.end(), name);
    if (it == d.names.end()) throw DataError("--drop: no design column named '" + name + "'");
    drop.push_back(static_cast<std::size_t>(it - d.names.begin()));
  }
  const FitResult full = refit_document(doc, d);
  EmConfig config;
  config.tol = doc.fit.tol;
  config.max_iter = doc.fit.max_iter;
  const LrtResult r = lrt(full, d.X, d.y, drop, config);
  out << "stat," << format_double(r.stat) << "\n"
      << "df," << r.df << "\n"
      << "p_value," << format_double(r.p_value) << "\n"
      << "full_loglik," << format_double(r.full_loglik) << "\n"
      << "restricted_loglik," << format_double(r.restricted_loglik) << "\n";
  return full.converged && r.restricted.converged ? kExitOk : kExitNoConvergence;
}

int cmd_select(const Options& o, std::ostream& out) {
  const auto& f = o.fit;
  if (f.unbounded && f.y_max) throw DataError("--unbounded and --y-max are mutually exclusive");
  const Dataset d = read_csv(f.data, f.response, f.weights, f.y_max);
  const Criterion crit = o.criterion == "aic" ? Criterion::aic : Criterion::bic;
  const EliminationResult r =
      backward_elimination(d.X, d.y, crit, parse_choice(f), scheme_for(f, d), d.weights, em_config(f));
  out << "step,dropped," << o.criterion << "\n";
  out << "0,," << format_double(r.initial_criterion) << "\n";
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    out << k + 1 << "," << d.names[r.steps[k].dropped] << "," << format_double(r.steps[k].criterion) << "\n";
  }
  out << "selected";
  for (auto c : r.selected) out << "," << d.names[c];
  out << "\n";
  return r.fit.converged ? kExitOk : kExitNoConvergence;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  SimulationSpec spec;
  spec.generator = generator_from_string(o.generator);
  spec.n = o.n;
  spec.p = o.p;
  spec.n_reps = o.reps;
  spec.n_test = o.n_test;
  spec.r_star = o.r_star;
  spec.sigma_latent = o.sigma;
  spec.rho = o.rho;
  spec.alpha = o.alpha;
  spec.threads = o.threads;
  spec.seed = *o.fit.seed;
  spec.validate();
  const SimulationReport report = run_simulation(spec);
  if (!o.out_path.empty()) emit(o.out_path, out, [&](std::ostream& s) { write_report_csv(report, s); });
  write_report_table(report, out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"STAR count regression: simultaneously transform and round"};
  app.require_subcommand(1);
  Options o;

  auto* fit = app.add_subcommand("fit", "fit a STAR model and write its JSON document");
  add_fit_flags(fit, o.fit);
  fit->add_option("--out", o.model_out, "model JSON path ('-' for standard output; default model.json)");
  fit->add_option("--table", o.table_path, "coefficient table CSV path");
  fit->add_flag("--ci", o.ci, "profile-likelihood confidence intervals");
  fit->add_option("--level", o.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  fit->add_flag("--pvalues", o.pvalues, "marginal likelihood-ratio p-values");

  auto* predict = app.add_subcommand("predict", "expected counts and 5/50/95% quantiles");
  predict->add_option("--model", o.model_path, "model JSON")->required();
  predict->add_option("--data", o.fit.data, "input CSV")->required();
  predict->add_option("--out", o.out_path, "output CSV (default: standard output)");

  auto* diagnose = app.add_subcommand("diagnose", "randomized quantile residuals");
  diagnose->add_option("--model", o.model_path, "model JSON")->required();
  diagnose->add_option("--data", o.fit.data, "input CSV")->required();
  diagnose->add_option("--sets", o.sets, "residual sets")->default_val(10);
  diagnose->add_option("--seed", o.fit.seed, "random seed")->required();
  diagnose->add_option("--out", o.out_path, "residual CSV (default: standard output)");
  diagnose->add_option("--qq", o.qq_path, "normal QQ data CSV");

  auto* test = app.add_subcommand("test", "likelihood-ratio test for dropping design columns");
  test->add_option("--model", o.model_path, "model JSON")->required();
  test->add_option("--data", o.fit.data, "input CSV")->required();
  test->add_option("--drop", o.drop, "comma-separated design column names")->required();

  auto* select = app.add_subcommand("select", "backward elimination by AIC or BIC");
  add_fit_flags(select, o.fit);
  select->add_option("--criterion", o.criterion, "aic or bic")->check(CLI::IsMember({"aic", "bic"}));

  auto* simulate = app.add_subcommand("simulate", "simulation study");
  simulate->add_option("--generator", o.generator, "mixture-cdf or negbin")
      ->required()
      ->check(CLI::IsMember({"mixture-cdf", "negbin"}));
  simulate->add_option("--reps", o.reps, "replications");
  simulate->add_option("--n", o.n, "training size");
  simulate->add_option("--p", o.p, "covariates (even)");
  simulate->add_option("--n-test", o.n_test, "test size");
  simulate->add_option("--r-star", o.r_star, "negative binomial size");
  simulate->add_option("--sigma", o.sigma, "latent scale of the mixture generator");
  simulate->add_option("--rho", o.rho, "design correlation base");
  simulate->add_option("--alpha", o.alpha, "test level");
  simulate->add_option("--threads", o.threads, "worker threads (default: STAR_THREADS or all cores)");
  simulate->add_option("--seed", o.fit.seed, "random seed")->required();
  simulate->add_option("--out", o.out_path, "report CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*fit) return cmd_fit(o, out, err);
    if (*predict) return cmd_predict(o, out);
    if (*diagnose) return cmd_diagnose(o, out);
    if (*test) return cmd_test(o, out);
    if (*select) return cmd_select(o, out);
    if (*simulate) return cmd_simulate(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace star
