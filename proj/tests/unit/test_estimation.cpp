#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/estimation.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

namespace {

CovariatePath random_path(std::size_t T, std::size_t C, std::size_t D, Rng& rng) {
  Eigen::MatrixXd x(T, C), z(T, D);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.uniform();
  return CovariatePath(x, z);
}

DemandCurve simulate_counts(const CovariatePath& path, const Eigen::VectorXd& coef, std::optional<double> omega, Rng& rng) {
  const auto X = design_with_intercept(path);
  DemandCurve c{"s", 0, {}};
  for (Eigen::Index t = 0; t < X.rows(); ++t) {
    const double mu = std::exp(X.row(t).dot(coef));
    c.values.push_back(omega ? rng.negative_binomial(mu, *omega) : rng.poisson(mu));
  }
  return c;
}

}  // namespace

TEST_CASE("negbin_strata_pmf matches sequence enumeration") {
  CHECK(negbin_strata_pmf(1, 1, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(negbin_strata_pmf(3, 2, 0.5) == doctest::Approx(0.25).epsilon(1e-15));
  for (int n = 1; n <= 10; ++n)
    for (int y = 1; y <= n; ++y)
      for (double p : {0.2, 0.5, 0.8}) CHECK(std::abs(negbin_strata_pmf(n, y, p) - oracle::strata_pmf_by_sequences(n, y, p)) <= 1e-12);
  double total = 0.0;
  for (int n = 3; n <= 500; ++n) total += negbin_strata_pmf(n, 3, 0.4);
  CHECK(std::abs(total - 1.0) <= 1e-6);
  CHECK_THROWS_AS(negbin_strata_pmf(2, 0, 0.5), DomainError);
  CHECK_THROWS_AS(negbin_strata_pmf(2, 3, 0.5), DomainError);
  CHECK_THROWS_AS(negbin_strata_pmf(2, 1, 1.5), DomainError);
}

TEST_CASE("count quantiles") {
  for (double mean : {0.3, 1.0, 4.0, 17.5, 80.0})
    for (double q : {0.01, 0.05, 0.5, 0.9, 0.95, 0.999}) CHECK(poisson_quantile(mean, q) == oracle::poisson_quantile(mean, q));
  // A huge dispersion approaches the Poisson.
  CHECK(negbin_quantile(12.0, 1e9, 0.9) == poisson_quantile(12.0, 0.9));
  CHECK(negbin_quantile(12.0, 1.0, 0.95) > poisson_quantile(12.0, 0.95));
}

TEST_CASE("logistic regression") {
  Rng rng(11);
  std::vector<BinaryObservation> obs;
  for (int i = 0; i < 20000; ++i) {
    BinaryObservation o;
    o.x = Eigen::VectorXd::Constant(1, rng.uniform());
    o.z = Eigen::VectorXd::Constant(1, rng.uniform());
    const double eta = 1.0 * o.x(0) + 0.5 * o.z(0);
    o.response = rng.uniform() < 1.0 / (1.0 + std::exp(-eta));
    obs.push_back(o);
  }
  const auto fit = fit_logistic(obs, 0);
  CHECK(std::abs(fit.theta(0) - 1.0) <= 3.0 * fit.std_errors(0));
  CHECK(std::abs(fit.gamma(0) - 0.5) <= 3.0 * fit.std_errors(2));
  CHECK(std::abs(fit.intercept()) <= 3.0 * fit.std_errors(1));

  std::vector<BinaryObservation> half;
  for (int i = 0; i < 1000; ++i) half.push_back({Eigen::VectorXd(0), Eigen::VectorXd(0), i % 2});
  const auto null_fit = fit_logistic(half, 0);
  CHECK(std::abs(null_fit.intercept()) <= 3.0 * null_fit.std_errors(0));

  for (auto& o : obs) o.response = 0;
  CHECK_THROWS_AS(fit_logistic(obs, 0), FitError);
}

TEST_CASE("poisson regression recovers its coefficients") {
  Rng rng(12);
  const auto path = random_path(200, 1, 1, rng);
  Eigen::VectorXd coef(3);
  coef << 0.8, 2.0, 0.4;
  const auto fit = fit_count_regression(simulate_counts(path, coef, std::nullopt, rng), path, CountFamily::Poisson);
  const auto est = fit.coefficients();
  for (int k = 0; k < 3; ++k) CHECK(std::abs(est(k) - coef(k)) <= 3.0 * fit.std_errors(k));
}

TEST_CASE("negative binomial dispersion is recovered") {
  Rng rng(13);
  const auto path = random_path(200, 1, 1, rng);
  Eigen::VectorXd coef(3);
  coef << 0.8, 2.0, 0.4;
  const auto fit = fit_count_regression(simulate_counts(path, coef, 5.0, rng), path, CountFamily::NegBin);
  REQUIRE(fit.dispersion);
  CHECK(*fit.dispersion >= 2.5);
  CHECK(*fit.dispersion <= 10.0);
}

TEST_CASE("constant covariates give the intercept-only fit") {
  Rng rng(14);
  const std::size_t T = 100;
  CovariatePath path(Eigen::MatrixXd(T, 0), Eigen::MatrixXd(T, 0));
  DemandCurve c{"s", 0, {}};
  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    c.values.push_back(rng.poisson(7.0));
    sum += static_cast<double>(c.values.back());
  }
  const auto fit = fit_count_regression(c, path, CountFamily::Poisson);
  CHECK(std::exp(fit.intercept()) == doctest::Approx(sum / T).epsilon(1e-8));

  DemandCurve zero{"s", 0, std::vector<std::int64_t>(T, 0)};
  CHECK_THROWS_AS(fit_count_regression(zero, path, CountFamily::Poisson), FitError);
}

TEST_CASE("conditional demand chart") {
  const std::size_t T = 5;
  RegressionFit fit;
  fit.theta = Eigen::VectorXd::Constant(1, std::log(4.0));
  fit.gamma = Eigen::VectorXd(0);
  fit.family = CountFamily::Poisson;
  const auto chart = conditional_demand_chart(fit, CovariatePath(Eigen::MatrixXd(T, 0), Eigen::MatrixXd(T, 0)), 0.9);
  for (std::size_t t = 0; t < T; ++t) {
    CHECK(chart.mean[t] == doctest::Approx(4.0));
    CHECK(chart.lower[t] == 1.0);
    CHECK(chart.upper[t] == 8.0);
  }

  fit.theta = Eigen::VectorXd::Zero(1);
  const auto flat = conditional_demand_chart(fit, CovariatePath(Eigen::MatrixXd(T, 0), Eigen::MatrixXd(T, 0)));
  for (double m : flat.mean) CHECK(m == 1.0);

  fit.theta = Eigen::Vector2d(0.7, 0.1);
  fit.gamma = Eigen::VectorXd(0);
  Eigen::MatrixXd x(T, 1);
  x << 0.1, 0.2, 0.3, 0.4, 0.45;
  const auto base = conditional_demand_chart(fit, CovariatePath(x, Eigen::MatrixXd(T, 0)));
  const auto doubled = conditional_demand_chart(fit, CovariatePath(2.0 * x, Eigen::MatrixXd(T, 0)));
  for (std::size_t t = 0; t < T; ++t) CHECK(doubled.mean[t] > base.mean[t]);
}

TEST_CASE("control bands cover simulated series near the nominal level") {
  Rng rng(15);
  const auto path = random_path(60, 1, 1, rng);
  Eigen::VectorXd coef(3);
  coef << 0.5, 2.5, 0.3;
  RegressionFit truth;
  truth.theta = coef.head(2);
  truth.gamma = coef.tail(1);
  truth.family = CountFamily::Poisson;
  const auto chart = conditional_demand_chart(truth, path, 0.9);
  double inside = 0.0, total = 0.0;
  for (int r = 0; r < 200; ++r) {
    const auto c = simulate_counts(path, coef, std::nullopt, rng);
    for (std::size_t t = 0; t < c.values.size(); ++t) {
      const double v = static_cast<double>(c.values[t]);
      inside += v >= chart.lower[t] && v <= chart.upper[t];
      total += 1.0;
    }
  }
  CHECK(inside / total >= 0.85);
  CHECK(inside / total <= 0.95);
}
