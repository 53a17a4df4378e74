#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tunedemand/envelope.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

namespace {

EnvelopeFit make_fit(ChangePoints taus, std::array<double, 3> nodes, std::size_t T) {
  EnvelopeFit f;
  f.taus = taus;
  f.nodes = nodes;
  f.horizon = T;
  f.refresh_lines();
  return f;
}

ChangePoints random_knots(std::size_t T, Rng& rng) {
  for (;;) {
    const auto a = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(T) - 8));
    const auto s = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(a) + 2, static_cast<std::int64_t>(T) - 5));
    const auto d = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(s) + 2, static_cast<std::int64_t>(T) - 3));
    const auto r = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(d) + 1, static_cast<std::int64_t>(T) - 1));
    ChangePoints k{a, s, d, r};
    if (k.ordered(T)) return k;
  }
}

std::array<double, 3> random_nodes(Rng& rng) {
  // Distinct slopes on either side of every knot.
  return {400.0 + 600.0 * rng.uniform(), 200.0 + 150.0 * rng.uniform(), 30.0 + 100.0 * rng.uniform()};
}

}  // namespace

TEST_CASE("adsr_mean follows the nodes") {
  const auto fit = make_fit({5, 15, 25, 39}, {100.0, 80.0, 20.0}, 40);
  CHECK(adsr_mean(0.0, fit) == 0.0);
  CHECK(adsr_mean(5.0, fit) == 100.0);
  CHECK(adsr_mean(15.0, fit) == 80.0);
  CHECK(adsr_mean(25.0, fit) == 20.0);
  CHECK(adsr_mean(39.0, fit) == 0.0);
  CHECK_THROWS_AS(adsr_mean(39.5, fit), DomainError);
  CHECK_THROWS_AS(adsr_mean(-0.1, fit), DomainError);
  for (double knot : {5.0, 15.0, 25.0}) {
    CHECK(std::abs(adsr_mean(knot - 1e-9, fit) - adsr_mean(knot + 1e-9, fit)) < 1e-6);
  }
  for (double t = 0.0; t <= 39.0; t += 0.25) CHECK(adsr_mean(t, fit) >= 0.0);
  // Phase lines agree with the node form.
  for (std::size_t t = 0; t <= 39; ++t) {
    const auto r = static_cast<int>(phase_of(t, fit.taus));
    CHECK(fit.alpha[r] + fit.beta[r] * static_cast<double>(t) == doctest::Approx(adsr_mean(static_cast<double>(t), fit)));
  }
}

TEST_CASE("change points recover noiseless knots") {
  const std::vector<double> y = envelope_curve({5, 15, 25, 39}, {100.0, 80.0, 20.0}, 40);
  CHECK(fit_changepoints(std::span<const double>(y)) == ChangePoints{5, 15, 25, 39});
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const auto k = random_knots(40, rng);
    const auto v = envelope_curve(k, random_nodes(rng), 40);
    CHECK(fit_changepoints(std::span<const double>(v)) == k);
  }
}

TEST_CASE("change-point search equals the exhaustive oracle") {
  Rng rng(42);
  for (std::size_t T : {8u, 9u, 12u, 17u, 24u, 31u}) {
    for (int rep = 0; rep < 3; ++rep) {
      std::vector<double> y(T);
      const auto k = random_knots(std::max<std::size_t>(T, 12), rng);
      const auto base = T >= 12 ? envelope_curve(k, random_nodes(rng), T) : std::vector<double>(T, 0.0);
      for (std::size_t t = 0; t < T; ++t) y[t] = base[t] + 50.0 * rng.normal() + (t == T / 2 ? 200.0 : 0.0);
      const auto expected = oracle::exhaustive_changepoints(y);
      const auto got = fit_changepoints(std::span<const double>(y));
      CHECK(got.as_array() == expected.taus);
      CHECK(envelope_rss(y, got) == doctest::Approx(expected.rss).epsilon(1e-9));
    }
  }
}

TEST_CASE("envelope_rss matches least squares") {
  Rng rng(43);
  std::vector<double> y(30);
  for (auto& v : y) v = 100.0 * rng.uniform();
  for (const ChangePoints k : {ChangePoints{2, 4, 6, 7}, ChangePoints{3, 10, 20, 29}, ChangePoints{5, 8, 12, 20}}) {
    CHECK(envelope_rss(y, k) == doctest::Approx(oracle::envelope_rss_qr(y, k.as_array())).epsilon(1e-9));
  }
}

TEST_CASE("degenerate series") {
  const std::vector<double> flat(20, 0.0), rising{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(fit_changepoints(std::span<const double>(flat)), DegenerateFitError);
  CHECK_THROWS_AS(fit_changepoints(std::span<const double>(rising)), DegenerateFitError);
  const std::vector<double> tiny{0, 1, 2, 1, 0, 0, 0};
  CHECK_THROWS_AS(fit_changepoints(std::span<const double>(tiny)), ConfigurationError);
}

TEST_CASE("change-point prior") {
  const std::size_t T = 10;
  // The attack factor is 1 / (T - 2).
  CHECK(changepoint_prior_factors({3, 5, 7, 9}, T)[0] == doctest::Approx(std::log(1.0 / 8.0)).epsilon(1e-15));
  CHECK(std::isinf(changepoint_prior_logpmf({5, 3, 7, 9}, T)));
  CHECK(changepoint_prior_logpmf({5, 3, 7, 9}, T) < 0.0);

  for (std::size_t horizon : {8u, 10u, 25u}) {
    double total = 0.0;
    for (std::size_t a = 1; a < horizon; ++a)
      for (std::size_t s = a + 1; s < horizon; ++s)
        for (std::size_t d = s + 1; d < horizon; ++d)
          for (std::size_t r = d + 1; r < horizon; ++r) {
            const double lp = changepoint_prior_logpmf({a, s, d, r}, horizon);
            if (std::isfinite(lp)) total += std::exp(lp);
          }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Conditional on the others, the attack slot normalizes on its own admissible range.
  const ChangePoints fixed{0, 6, 8, 9};
  double slot = 0.0;
  for (std::size_t a = 1; a < 6; ++a) {
    const double f = changepoint_prior_factors({a, fixed.sustain, fixed.decay, fixed.release}, T)[0];
    if (std::isfinite(f)) slot += std::exp(f);
  }
  CHECK(slot <= 1.0 + 1e-12);

  Rng rng(44);
  std::map<std::array<std::size_t, 4>, int> counts;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto k = sample_changepoint_prior(T, rng);
    CHECK(std::isfinite(changepoint_prior_logpmf(k, T)));
    ++counts[k.as_array()];
  }
  for (const auto& [k, c] : counts) {
    const double p = std::exp(changepoint_prior_logpmf({k[0], k[1], k[2], k[3]}, T));
    CHECK(std::abs(c / double(n) - p) <= 4.0 * std::sqrt(p * (1 - p) / n) + 1e-4);
  }
}

TEST_CASE("partite fit") {
  const ChangePoints k{5, 15, 25, 39};
  const std::array<double, 3> nodes{1000.0, 800.0, 200.0};
  const auto clean = envelope_curve(k, nodes, 40);
  DemandCurve curve{"s", 0, {}};
  for (double v : clean) curve.values.push_back(static_cast<std::int64_t>(std::llround(v)));
  const auto none = CovariatePath::zeros(40, 0, 0);

  const auto fit = fit_partite(curve, k, none);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(fit.nodes[i] / nodes[i] - 1.0) < 0.01);
  CHECK(fit.beta[2] <= 0.0);
  CHECK(fit.dispersion);

  // Without covariates the least-squares family is the plain node regression.
  PartiteOptions ls;
  ls.family = EnvelopeFamily::LeastSquares;
  const auto lsq = fit_partite(curve, k, none, ls);
  std::vector<double> y(curve.values.begin(), curve.values.end());
  const auto X = oracle::envelope_design(40, k.as_array());
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), 40));
  for (int i = 0; i < 3; ++i) CHECK(lsq.nodes[i] == doctest::Approx(beta(i)).epsilon(1e-9));

  // Covariate effects on the log scale of each phase.
  Rng rng(45);
  Eigen::MatrixXd x(40, 1), z(40, 1);
  for (int t = 0; t < 40; ++t) {
    x(t, 0) = rng.uniform();
    z(t, 0) = rng.uniform();
  }
  const CovariatePath path(x, z);
  DemandCurve noisy{"s", 0, {}};
  for (int t = 0; t < 40; ++t) {
    const double mu = std::max(1e-3, clean[t]) * std::exp(0.4 * x(t, 0) + 0.2 * z(t, 0));
    noisy.values.push_back(rng.negative_binomial(mu, 200.0));
  }
  const auto cov_fit = fit_partite(noisy, k, path);
  const auto pred = envelope_prediction(cov_fit, path);
  REQUIRE(pred.size() == 40);
  for (int r = 1; r < 3; ++r) CHECK(std::abs(cov_fit.effects[r].theta(0) - 0.4) < 0.3);

  CHECK_THROWS_AS(fit_partite(curve, ChangePoints{1, 15, 25, 39}, none), PhaseSupportError);
}
