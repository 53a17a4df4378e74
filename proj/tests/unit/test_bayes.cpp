#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tunedemand/bayes.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/multivariate.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

namespace {

CovariatePath random_path(std::size_t T, Rng& rng) {
  Eigen::MatrixXd x(T, 1), z(T, 1);
  for (std::size_t t = 0; t < T; ++t) {
    x(t, 0) = rng.uniform();
    z(t, 0) = rng.uniform();
  }
  return CovariatePath(x, z);
}

NullParameters truth(std::size_t J) {
  NullParameters p;
  for (std::size_t j = 0; j < J; ++j) {
    p.theta.push_back(Eigen::Vector2d(0.7, 2.5));
    p.gamma.push_back(Eigen::VectorXd::Constant(1, 0.3));
    p.omega.push_back(10.0);
  }
  p.corr_x.push_back(Eigen::Matrix2d::Identity());
  p.corr_z.push_back(Eigen::MatrixXd::Identity(1, 1));
  p.eta_x.push_back(4.0);
  p.eta_z.push_back(4.0);
  return p;
}

McmcConfig quick(std::uint64_t seed) {
  McmcConfig c;
  c.chains = 2;
  c.warmup = 600;
  c.draws = 600;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("prior draws respect the hierarchy") {
  auto spec = NullModelSpec::defaults(1, 1, {2});
  spec.artists[0].dispersion_shape = 2.0;
  spec.artists[0].dispersion_rate = 1.0;
  Rng rng(31);
  const int n = 50000;
  double omega_sum = 0.0, omega_sq = 0.0;
  Eigen::MatrixXd theta(n, 2);
  for (int i = 0; i < n; ++i) {
    const auto p = sample_prior(spec, rng);
    for (const auto& g : p.gamma) CHECK((g.array() >= 0.0).all());
    CHECK(is_correlation_matrix(p.corr_x[0]));
    omega_sum += p.omega[0];
    omega_sq += p.omega[0] * p.omega[0];
    theta.row(i) = p.theta[0].transpose();
  }
  const double mean = omega_sum / n, var = omega_sq / n - mean * mean;
  CHECK(std::abs(mean - 2.0) <= 3.0 * std::sqrt(var / n));

  const Eigen::MatrixXd centered = theta.rowwise() - theta.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1);
  const Eigen::VectorXd s = spec.artists[0].scale_x;
  const Eigen::MatrixXd expected = (s.array() * s.array()).matrix().asDiagonal();
  CHECK((cov - expected).norm() / expected.norm() < 0.1);
}

TEST_CASE("prior-only sampling reproduces the prior") {
  const auto spec = NullModelSpec::defaults(1, 1, {2});
  McmcConfig c = quick(5);
  c.prior_only = true;
  c.chains = 4;
  c.warmup = 1000;
  c.draws = 4000;
  const auto draws = fit_null_model({}, spec, c);
  Rng rng(32);
  std::vector<double> t0, om, g0;
  for (int i = 0; i < 20000; ++i) {
    const auto p = sample_prior(spec, rng);
    t0.push_back(p.theta[0](1));
    om.push_back(p.omega[0]);
    g0.push_back(p.gamma[0](0));
  }
  auto moments = [](const std::vector<double>& v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / v.size())};
  };
  const std::vector<std::pair<std::string, std::vector<double>>> checks{
      {"theta[0,1]", t0}, {"omega[0]", om}, {"gamma[0,0]", g0}};
  for (const auto& [name, ref] : checks) {
    const auto [m, s] = moments(ref);
    const double se = s / std::sqrt(std::max(50.0, draws.ess[draws.index_of(name)]));
    CHECK_MESSAGE(std::abs(draws.mean(name) - m) <= 4.0 * se + 0.02 * s, name);
    CHECK_MESSAGE(std::abs(draws.sd(name) / s - 1.0) < 0.2, name);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  Rng rng(33);
  const auto spec = NullModelSpec::defaults(1, 1, {2});
  std::vector<CovariatePath> paths{random_path(30, rng), random_path(30, rng)};
  const auto data = simulate_null_data(spec, truth(2), paths, rng);
  auto c = quick(7);
  c.warmup = 100;
  c.draws = 100;
  const auto a = fit_null_model(data, spec, c);
  const auto b = fit_null_model(data, spec, c);
  REQUIRE(a.chains.size() == 2);
  for (std::size_t k = 0; k < a.chains.size(); ++k) CHECK(a.chains[k] == b.chains[k]);
  CHECK(a.chains[0] != a.chains[1]);
  c.seed = 8;
  CHECK(fit_null_model(data, spec, c).chains[0] != a.chains[0]);
  c.parallel = false;
  c.seed = 7;
  CHECK(fit_null_model(data, spec, c).chains[1] == a.chains[1]);
}

TEST_CASE("all-zero data is rejected") {
  const auto spec = NullModelSpec::defaults(1, 1, {1});
  Rng rng(34);
  NullModelData data;
  data.segments.push_back({DemandCurve{"s", 0, std::vector<std::int64_t>(20, 0)}, random_path(20, rng)});
  CHECK_THROWS_AS(fit_null_model(data, spec, quick(1)), FitError);
}

TEST_CASE("posterior recovers known effects") {
  const auto spec = NullModelSpec::defaults(1, 1, {2});
  int covered = 0, total = 0;
  for (std::uint64_t rep = 0; rep < 6; ++rep) {
    Rng rng(100 + rep);
    std::vector<CovariatePath> paths{random_path(60, rng), random_path(60, rng)};
    const auto data = simulate_null_data(spec, truth(2), paths, rng);
    const auto draws = fit_null_model(data, spec, quick(rep + 1));
    for (std::size_t j = 0; j < 2; ++j) {
      const auto t = "theta[" + std::to_string(j) + ",0]";
      const auto g = "gamma[" + std::to_string(j) + ",0]";
      covered += draws.quantile(t, 0.05) <= 0.7 && 0.7 <= draws.quantile(t, 0.95);
      covered += draws.quantile(g, 0.05) <= 0.3 && 0.3 <= draws.quantile(g, 0.95);
      total += 2;
    }
    for (const auto& c : draws.chains)
      for (const auto& name : {"gamma[0,0]", "gamma[1,0]"}) CHECK((c.col(draws.index_of(name)).array() >= 0.0).all());
  }
  CHECK(static_cast<double>(covered) / total >= 0.8);
}

TEST_CASE("posterior predictive") {
  Rng rng(35);
  const auto spec = NullModelSpec::defaults(1, 1, {2});
  std::vector<CovariatePath> paths{random_path(40, rng), random_path(40, rng)};
  const auto data = simulate_null_data(spec, truth(2), paths, rng);
  const auto draws = fit_null_model(data, spec, quick(3));
  const std::vector<double> levels{0.05, 0.5, 0.95};
  const auto q = posterior_predictive(draws, paths, levels, rng);
  for (const auto& seg : q.segments)
    for (std::size_t t = 0; t < 40; ++t) {
      CHECK(seg[0][t] <= seg[1][t]);
      CHECK(seg[1][t] <= seg[2][t]);
    }

  // Constant covariates: the predictive does not decay.
  const CovariatePath flat(Eigen::MatrixXd::Constant(40, 1, 0.5), Eigen::MatrixXd::Constant(40, 1, 0.5));
  const auto f = posterior_predictive(draws, std::vector<CovariatePath>{flat}, levels, rng);
  double first = 0.0, last = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    first += f.aggregate_mean[t];
    last += f.aggregate_mean[30 + t];
  }
  CHECK(std::abs(first - last) / first < 0.05);

  // Median band holds most of a fresh series from the same process.
  const auto fresh = simulate_null_data(spec, truth(2), paths, rng);
  int inside = 0;
  for (std::size_t t = 0; t < 40; ++t) {
    const double v = static_cast<double>(fresh.segments[0].curve.values[t]);
    inside += v >= q.segments[0][0][t] && v <= q.segments[0][2][t];
  }
  CHECK(inside >= 32);
}

TEST_CASE("weekly updates and their undo") {
  Rng rng(36);
  const auto spec = NullModelSpec::defaults(1, 1, {2});
  std::vector<CovariatePath> paths{random_path(41, rng), random_path(41, rng)};
  const auto full = simulate_null_data(spec, truth(2), paths, rng);
  NullModelData first40 = full;
  for (auto& s : first40.segments) {
    s.curve.values.pop_back();
    s.covariates = CovariatePath(s.covariates.endogenous.topRows(40), s.covariates.exogenous.topRows(40));
  }
  const auto base = fit_null_model(first40, spec, quick(4));

  WeekObservation week;
  week.week = 40;
  for (std::size_t j = 0; j < 2; ++j) {
    week.counts.push_back(full.segments[j].curve.values[40]);
    week.x.push_back(full.segments[j].covariates.x(40));
    week.z.push_back(full.segments[j].covariates.z(40));
  }
  const auto updated = update_with_new_week(base, week);
  for (const auto& name : {"theta[0,0]", "theta[1,1]", "gamma[0,0]"}) {
    CHECK_MESSAGE(std::abs(updated.mean(name) - base.mean(name)) < 3.0 * base.sd(name), name);
  }
  const auto undone = remove_last_week(updated);
  REQUIRE(undone.chains.size() == base.chains.size());
  for (std::size_t c = 0; c < base.chains.size(); ++c) CHECK(undone.chains[c] == base.chains[c]);

  WeekObservation wrong = week;
  wrong.week = 42;
  CHECK_THROWS_AS(update_with_new_week(base, wrong), DomainError);

  WeekObservation outlier = week;
  for (auto& n : outlier.counts) n = 100 * static_cast<std::int64_t>(std::exp(2.5 + 0.7 * 0.5 + 0.3 * 0.5));
  const auto shocked = update_with_new_week(base, outlier);
  CHECK(shocked.mean("omega[0]") < base.mean("omega[0]"));
}
