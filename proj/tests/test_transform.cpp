#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "star/error.hpp"
#include "star/monotone_spline.hpp"
#include "star/rounding.hpp"
#include "star/transform.hpp"

using namespace star;

namespace {

double sample_sd(const std::vector<int>& y) {
  double m = 0.0;
  for (int v : y) m += v;
  m /= static_cast<double>(y.size());
  double ss = 0.0;
  for (int v : y) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(y.size() - 1));
}

std::vector<int> random_counts(std::mt19937_64& rng, int n, double mean) {
  std::poisson_distribution<int> pois(mean);
  std::vector<int> y(n);
  for (auto& v : y) v = pois(rng);
  return y;
}

}  // namespace

TEST_CASE("round_value") {
  const auto def = RoundingScheme::unbounded();
  CHECK(round_value(2.7, def) == 2);
  CHECK(round_value(-5.0, def) == 0);
  CHECK(round_value(0.99, def) == 0);
  CHECK(round_value(1.0, def) == 1);
  CHECK(round_value(31.2, RoundingScheme::bounded(30)) == 30);
  CHECK(round_value(1e12, RoundingScheme::bounded(30)) == 30);
  CHECK(round_value(31.2, def) == 31);
}

TEST_CASE("rounding scheme breakpoints") {
  const auto s = RoundingScheme::bounded(3);
  CHECK(s.breakpoint(0) == -kInf);
  CHECK(s.breakpoint(1) == 1.0);
  CHECK(s.breakpoint(3) == 3.0);
  CHECK(s.breakpoint(4) == kInf);
  CHECK(RoundingScheme::censored(3).y_max() == 3);
  CHECK(RoundingScheme::censored(3).censored_at() == 3);
  const auto custom = RoundingScheme::with_breakpoints({1.0, 2.5, 7.0});
  CHECK(custom.y_max() == 3);
  CHECK(round_value(2.4, custom) == 1);
  CHECK(round_value(2.5, custom) == 2);
  CHECK(round_value(100.0, custom) == 3);
}

TEST_CASE("bounded rounding never leaves the support") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 30.0);
  const auto s = RoundingScheme::bounded(12);
  for (int k = 0; k < 100000; ++k) {
    const int j = round_value(z(rng), s);
    REQUIRE(j >= 0);
    REQUIRE(j <= 12);
  }
}

TEST_CASE("ecdf base example") {
  const std::vector<int> y{0, 1, 1, 3};
  const auto base = ecdf_transform_base(y, RoundingScheme::bounded(3));
  CHECK(base.mu_z == doctest::Approx(1.25).epsilon(1e-15));
  CHECK(std::abs(base.sigma_z - sample_sd(y)) < 1e-14);
  CHECK(std::abs(base.sigma_z - 1.2583057) < 1e-7);
  CHECK(std::abs(base.cdf(0) - 0.2) < 1e-15);
  CHECK(std::abs(base.cdf(1) - 0.6) < 1e-15);
  const double g1 = 1.25 + sample_sd(y) * oracle::norm_quantile(0.2);
  const double g2 = 1.25 + sample_sd(y) * oracle::norm_quantile(0.6);
  CHECK(std::abs(base.evaluate(1.0) - g1) < 1e-12);
  CHECK(std::abs(base.evaluate(2.0) - g2) < 1e-12);
  CHECK(std::abs(base.evaluate(1.0) - 0.1910) < 5e-5);
  CHECK(std::abs(base.evaluate(2.0) - 1.5688) < 5e-5);
  CHECK(base.evaluate(0.5) == -kInf);
  CHECK(base.evaluate(4.0) == kInf);
}

TEST_CASE("ecdf base weights") {
  const std::vector<int> y{0, 2, 2, 5, 7, 1};
  const auto scheme = RoundingScheme::unbounded();
  const auto plain = ecdf_transform_base(y, scheme);
  const std::vector<double> ones(y.size(), 1.0);
  const std::vector<double> threes(y.size(), 3.0);
  for (const auto& w : {ones, threes}) {
    const auto weighted = ecdf_transform_base(y, scheme, w);
    CHECK(weighted.mu_z == doctest::Approx(plain.mu_z).epsilon(1e-15));
    CHECK(weighted.sigma_z == doctest::Approx(plain.sigma_z).epsilon(1e-15));
    REQUIRE(weighted.scaled_cdf.size() == plain.scaled_cdf.size());
    for (std::size_t j = 0; j < plain.scaled_cdf.size(); ++j) {
      CHECK(weighted.scaled_cdf[j] == doctest::Approx(plain.scaled_cdf[j]).epsilon(1e-15));
    }
  }
  // Weight 2 on an observation acts like a duplicate for the mean and ECDF.
  const std::vector<int> dup{0, 2, 2, 2, 5, 7, 1};
  std::vector<double> w2(y.size(), 1.0);
  w2[1] = 2.0;
  const auto a = ecdf_transform_base(y, scheme, w2);
  const auto b = ecdf_transform_base(dup, scheme);
  CHECK(a.mu_z == doctest::Approx(b.mu_z).epsilon(1e-14));
  for (int j = 0; j <= 7; ++j) {
    CHECK(a.cdf(j) / (6.0 / 7.0) * 7.0 / 8.0 == doctest::Approx(b.cdf(j)).epsilon(1e-14));
  }
}

TEST_CASE("ecdf base errors") {
  const std::vector<int> constant{4, 4, 4};
  CHECK_THROWS_AS(ecdf_transform_base(constant, RoundingScheme::unbounded()), DataError);
  const std::vector<int> single{2};
  CHECK_THROWS_AS(ecdf_transform_base(single, RoundingScheme::unbounded()), DataError);
  const std::vector<int> negative{0, -1, 2};
  CHECK_THROWS_AS(ecdf_transform_base(negative, RoundingScheme::unbounded()), DataError);
  const std::vector<int> ok{0, 1, 2};
  const std::vector<double> bad_w{1.0, 0.0, 1.0};
  CHECK_THROWS_AS(ecdf_transform_base(ok, RoundingScheme::unbounded(), bad_w), DataError);
  const std::vector<int> over{0, 5};
  CHECK_THROWS_AS(ecdf_transform_base(over, RoundingScheme::bounded(3)), DataError);
}

TEST_CASE("nonparametric transform interpolates the step function") {
  const std::vector<int> y{0, 1, 1, 3};
  const auto scheme = RoundingScheme::bounded(3);
  const auto g = fit_nonparametric_transform(y, scheme);
  const auto base = ecdf_transform_base(y, scheme);
  CHECK(std::abs(g.evaluate(1.0) - base.evaluate(1.0)) < 1e-12);
  CHECK(std::abs(g.evaluate(1.0) - 0.1910) < 5e-5);
  CHECK(std::abs(g.evaluate(3.0) - base.evaluate(3.0)) < 1e-12);
  CHECK(std::abs(g.evaluate(3.0) - 1.5688) < 5e-5);
  CHECK(g.evaluate(1.0) < g.evaluate(2.0));
  CHECK(g.evaluate(2.0) < g.evaluate(3.0));
  CHECK(g.evaluate(0.999) == -kInf);
  CHECK(g.evaluate(4.0) == kInf);
  CHECK(std::isfinite(g.evaluate(3.999)));
  CHECK(g.kind() == TransformKind::nonparametric);
}

TEST_CASE("nonparametric transform opens unobserved cells") {
  const std::vector<int> y{0, 1, 1, 3, 3};
  const auto g = fit_nonparametric_transform(y, RoundingScheme::unbounded());
  CHECK(g.evaluate(2.0) < g.evaluate(3.0));
  CHECK(g.evaluate(3.0) < g.evaluate(4.0));
  const auto gb = fit_nonparametric_transform(y, RoundingScheme::bounded(6));
  for (int j = 1; j < 6; ++j) CHECK(gb.evaluate(j) < gb.evaluate(j + 1));
}

TEST_CASE("nonparametric transform with two distinct values is linear") {
  const std::vector<int> y{0, 30, 0, 30, 0};
  const auto g = fit_nonparametric_transform(y, RoundingScheme::unbounded());
  const double a = g.evaluate(1.0);
  const double b = g.evaluate(31.0);
  for (double t : {1.0, 5.5, 12.0, 20.25, 31.0, 40.0}) {
    CHECK(std::abs(g.evaluate(t) - (a + (b - a) * (t - 1.0) / 30.0)) < 1e-12);
  }
  const std::vector<int> constant{2, 2};
  CHECK_THROWS_AS(fit_nonparametric_transform(constant, RoundingScheme::unbounded()), DataError);
}

TEST_CASE("nonparametric transform linear beyond the largest observation") {
  std::mt19937_64 rng(8);
  const auto y = random_counts(rng, 200, 4.0);
  const auto g = fit_nonparametric_transform(y, RoundingScheme::unbounded());
  const auto& sp = *g.spline();
  const double last = sp.knot_x().back();
  const double s1 = g.evaluate(last + 1.0) - g.evaluate(last);
  const double s2 = g.evaluate(last + 7.0) - g.evaluate(last + 6.0);
  CHECK(s1 > 0.0);
  CHECK(std::abs(s1 - s2) < 1e-12);
}

TEST_CASE("nonparametric CDF recovery at observed values") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    auto y = random_counts(rng, 50 + 20 * rep, 0.5 + rep);
    const bool bounded = rep % 2 == 0;
    int top = 0;
    for (int v : y) top = std::max(top, v);
    const auto scheme = bounded ? RoundingScheme::bounded(top + rep % 3) : RoundingScheme::unbounded();
    std::vector<double> w;
    if (rep % 4 == 1) {
      std::uniform_real_distribution<double> u(0.2, 3.0);
      for (std::size_t i = 0; i < y.size(); ++i) w.push_back(u(rng));
    }
    const auto g = fit_nonparametric_transform(y, scheme, w);
    const auto base = ecdf_transform_base(y, scheme, w);
    int checked = 0;
    for (int j : base.observed) {
      if (j == base.observed.front()) continue;
      const double u = (g.evaluate(scheme.breakpoint(j)) - base.mu_z) / base.sigma_z;
      CAPTURE(rep);
      CAPTURE(j);
      CHECK(std::abs(static_cast<double>(oracle::phi_hp(u)) - base.cdf(j - 1)) <= 1e-10);
      ++checked;
    }
    CHECK(checked + 1 == static_cast<int>(base.observed.size()));
  }
}

TEST_CASE("box-cox transform") {
  const auto s = RoundingScheme::unbounded();
  const auto id = Transformation::box_cox(1.0, 0.0, 1.0, s);
  for (double t : {1.0, 2.5, 10.0}) CHECK(id.evaluate(t) == doctest::Approx(t - 1.0).epsilon(1e-15));
  CHECK(Transformation::box_cox(0.5, 0.0, 1.0, s).evaluate(4.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(Transformation::box_cox(0.0, 0.0, 1.0, s).evaluate(std::exp(1.0)) == doctest::Approx(1.0).epsilon(1e-15));
  const auto anchored = Transformation::box_cox(0.5, 3.0, 2.0, s);
  CHECK(anchored.evaluate(4.0) == doctest::Approx(7.0).epsilon(1e-15));
  CHECK(anchored.evaluate(0.5) == -kInf);
  CHECK(Transformation::box_cox(0.5, 0.0, 1.0, RoundingScheme::bounded(5)).evaluate(6.0) == kInf);
  CHECK_THROWS_AS(Transformation::box_cox(-0.1, 0.0, 1.0, s), DomainError);
}

TEST_CASE("fixed transforms") {
  const auto s = RoundingScheme::unbounded();
  CHECK(Transformation::fixed(TransformKind::log, s).evaluate(std::exp(2.0)) == doctest::Approx(2.0));
  CHECK(Transformation::fixed(TransformKind::sqrt, s).evaluate(9.0) == doctest::Approx(4.0));
  CHECK(Transformation::fixed(TransformKind::identity, s).evaluate(9.0) == doctest::Approx(9.0));
  CHECK(transform_kind_from_string(to_string(TransformKind::box_cox)) == TransformKind::box_cox);
  CHECK_THROWS_AS(transform_kind_from_string("cubic"), DomainError);
}

TEST_CASE("parametric CDF transforms") {
  std::vector<int> y;
  for (int k = 0; k < 20; ++k) y.push_back(5 + k % 11);
  const auto scheme = RoundingScheme::unbounded();
  const auto base = ecdf_transform_base(y, scheme);
  const auto g = parametric_cdf_transform(CdfFamily::poisson, y, scheme);
  for (int j = 0; j <= 25; ++j) {
    const double u = (g.evaluate(j + 1.0) - base.mu_z) / base.sigma_z;
    CHECK(std::abs(static_cast<double>(oracle::phi_hp(u)) - boost::math::gamma_q(j + 1.0, base.mu_z)) < 1e-10);
  }
  CHECK(g.kind() == TransformKind::poisson_cdf);

  CHECK(negbin_moment_size(2.0, 10.0 / 3.0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(negbin_moment_size(2.0, 2.0), DataError);
  CHECK_THROWS_AS(negbin_moment_size(2.0, 1.5), DataError);

  const std::vector<int> over{0, 0, 1, 2, 2, 7};
  const auto nb = parametric_cdf_transform(CdfFamily::negbin, over, scheme);
  const auto ob = ecdf_transform_base(over, scheme);
  const double mean = ob.mu_z, var = ob.sigma_z * ob.sigma_z;
  const double r = mean * mean / (var - mean);
  const double p = r / (r + mean);
  double f = 0.0;
  for (int j = 0; j <= 10; ++j) {
    f += std::exp(std::lgamma(j + r) - std::lgamma(r) - std::lgamma(j + 1.0) + r * std::log(p) + j * std::log1p(-p));
    const double u = (nb.evaluate(j + 1.0) - mean) / ob.sigma_z;
    CHECK(std::abs(static_cast<double>(oracle::phi_hp(u)) - f) < 1e-10);
  }
  const std::vector<int> under{1, 2, 2, 3};
  CHECK_THROWS_AS(parametric_cdf_transform(CdfFamily::negbin, under, scheme), DataError);
}

TEST_CASE("monotone spline examples") {
  const std::vector<double> x2{0.0, 1.0}, y2{0.0, 1.0};
  const auto line = MonotoneSpline::fit(x2, y2);
  for (double t = 0.0; t <= 1.0; t += 0.125) CHECK(line(t) == doctest::Approx(t).epsilon(1e-15));

  const std::vector<double> x3{0.0, 1.0, 2.0}, y3{0.0, 0.0, 1.0};
  const auto flat = MonotoneSpline::fit(x3, y3);
  for (double t = 0.0; t <= 1.0; t += 0.0625) CHECK(flat(t) == 0.0);
  CHECK(flat(2.0) == 1.0);
  const double m = flat.derivative(2.0);
  CHECK(flat(3.5) == doctest::Approx(1.0 + 1.5 * m).epsilon(1e-14));
  CHECK(flat(-1.0) == doctest::Approx(-flat.derivative(0.0)).epsilon(1e-14));

  const std::vector<double> dup{0.0, 0.0, 1.0}, yy{0.0, 1.0, 2.0}, down{0.0, 2.0, 1.0};
  CHECK_THROWS_AS(MonotoneSpline::fit(dup, yy), DomainError);
  CHECK_THROWS_AS(MonotoneSpline::fit(x3, down), DomainError);
  const std::vector<double> one{0.0};
  CHECK_THROWS_AS(MonotoneSpline::fit(one, one), DomainError);
}

TEST_CASE("monotone spline interpolates and is monotone") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> gap(0.05, 3.0), rise(0.0, 2.0);
  std::bernoulli_distribution flat(0.2);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> x{0.0}, y{0.0};
    for (int k = 0; k < 12; ++k) {
      x.push_back(x.back() + gap(rng));
      y.push_back(y.back() + (flat(rng) ? 0.0 : rise(rng) * rise(rng) * rise(rng)));
    }
    const auto s = MonotoneSpline::fit(x, y);
    for (std::size_t k = 0; k < x.size(); ++k) REQUIRE(s(x[k]) == y[k]);
    double prev = s(x.front() - 1.0);
    for (double t = x.front() - 1.0; t <= x.back() + 1.0; t += 0.01) {
      REQUIRE(s.derivative(t) >= -1e-12);
      const double v = s(t);
      REQUIRE(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("transformation inverse round trip") {
  std::mt19937_64 rng(31);
  const auto y = random_counts(rng, 300, 3.0);
  int top = 0;
  for (int v : y) top = std::max(top, v);
  const auto bounded = RoundingScheme::bounded(top + 2);
  const auto unbounded = RoundingScheme::unbounded();
  std::vector<int> over = y;
  for (std::size_t i = 0; i < over.size(); i += 5) over[i] *= 3;
  const std::vector<Transformation> transforms{
      fit_nonparametric_transform(y, bounded),
      fit_nonparametric_transform(y, unbounded),
      parametric_cdf_transform(CdfFamily::poisson, y, unbounded),
      parametric_cdf_transform(CdfFamily::negbin, over, unbounded),
      Transformation::box_cox(0.0, 1.0, 2.0, unbounded),
      Transformation::box_cox(0.37, 1.0, 2.0, bounded),
      Transformation::box_cox(1.0, 0.0, 1.0, unbounded),
      Transformation::fixed(TransformKind::sqrt, unbounded),
  };
  for (const auto& g : transforms) {
    const double hi = std::isfinite(g.support_upper()) ? g.support_upper() : 60.0;
    std::uniform_real_distribution<double> t_d(1.0, hi);
    for (int k = 0; k < 10000; ++k) {
      const double t = t_d(rng);
      if (t <= 1.0 || t >= hi) continue;
      CAPTURE(to_string(g.kind()));
      CAPTURE(t);
      REQUIRE(std::abs(g.inverse(g.evaluate(t)) - t) <= 1e-8);
    }
    CHECK(g.inverse(-kInf) < 1.0);
    CHECK(round_value(g.inverse(g.evaluate(1.0) - 5.0), unbounded) == 0);
  }
}

TEST_CASE("transform from explicit CDF") {
  const std::vector<double> cdf{0.1, 0.4, 0.4, 0.8, 1.0};
  const auto scheme = RoundingScheme::bounded(4);
  const auto g = transform_from_cdf(cdf, 0.0, 1.0, scheme);
  CHECK(std::abs(g.evaluate(1.0) - oracle::norm_quantile(0.1)) < 1e-12);
  CHECK(std::abs(g.evaluate(2.0) - oracle::norm_quantile(0.4)) < 1e-12);
  CHECK(g.evaluate(3.0) == g.evaluate(2.0));
  CHECK(std::abs(g.evaluate(4.0) - oracle::norm_quantile(0.8)) < 1e-12);
  CHECK(g.evaluate(5.0) == kInf);
}
