#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/optimizer.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("closed form on the unit-norm example") {
  const auto x = closed_form_null(vec({0.6, 0.8}), vec({0.0}), vec({0.0}), 0.5);
  CHECK(x(0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(x(1) == doctest::Approx(0.4).epsilon(1e-12));
  // ceiling 1 - 0.2 binds below the budget
  const auto capped = closed_form_null(vec({0.6, 0.8}), vec({0.2}), vec({1.0}), 1.0);
  CHECK(capped(0) == doctest::Approx(0.48).epsilon(1e-12));
  CHECK(capped(1) == doctest::Approx(0.64).epsilon(1e-12));
  CHECK_THROWS_AS(closed_form_null(vec({0.0, 0.0}), vec({0.0}), vec({0.0}), 1.0), DomainError);
  CHECK_THROWS_AS(closed_form_null(vec({1.0}), vec({0.0}), vec({0.0}), -1.0), DomainError);
}

TEST_CASE("LP puts spend on the best channel") {
  const auto lp = lp_null_max(vec({0.6, 0.8}), vec({0.0}), vec({0.0}), 0.5);
  CHECK(lp.spend(0) == 0.0);
  CHECK(lp.spend(1) == doctest::Approx(0.5));
  CHECK(lp.objective == doctest::Approx(0.4));
  const auto ceiling = lp_null_max(vec({2.0}), vec({0.5}), vec({1.0}), 1.0);
  CHECK(ceiling.spend(0) == doctest::Approx(0.25));
  CHECK(ceiling.objective == doctest::Approx(1.0));
  const auto none = lp_null_max(vec({-1.0, 0.0}), vec({0.1}), vec({1.0}), 5.0);
  CHECK(none.spend.isZero());
  CHECK(none.objective == doctest::Approx(0.1));
  CHECK_THROWS_AS(lp_null_max(vec({1.0}), vec({2.0}), vec({1.0}), 1.0), InfeasibleError);
}

TEST_CASE("LP matches vertex enumeration on random instances") {
  Rng rng(71);
  for (int rep = 0; rep < 500; ++rep) {
    const auto C = static_cast<Eigen::Index>(rng.uniform_int(1, 5));
    Eigen::VectorXd theta(C);
    for (Eigen::Index c = 0; c < C; ++c) theta(c) = rng.normal(0.2, 0.5);
    const double gz = rng.uniform() * 0.9 - 0.3;
    const double B = rng.uniform() * 3.0;
    const auto lp = lp_null_max(theta, vec({gz}), vec({1.0}), B);
    CHECK(lp.objective == doctest::Approx(oracle::lp_vertex_objective(theta, gz, B)).epsilon(1e-12));
    CHECK(lp.spend.minCoeff() >= 0.0);
    CHECK(lp.spend.sum() <= B + 1e-12);
  }
}

TEST_CASE("closed form identity and budget violation flag") {
  Rng rng(72);
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd theta(3);
    for (int c = 0; c < 3; ++c) theta(c) = rng.normal(0.0, 1.0);
    const double gz = rng.uniform() * 0.8;
    const double B = rng.uniform() * 2.0;
    const auto x = closed_form_null(theta, vec({gz}), vec({1.0}), B);
    CHECK(std::abs(theta.dot(x) - std::min(B, 1.0 - gz)) < 1e-12);
  }
  const auto cmp = compare_schemes(vec({0.6, 0.8}), vec({0.0}), vec({0.0}), 0.5);
  CHECK(cmp.budget_violation);
  CHECK(cmp.closed_form_spend == doctest::Approx(0.7));
  CHECK(cmp.dominant == "lp");
  const auto single = compare_schemes(vec({1.0}), vec({0.0}), vec({0.0}), 0.4);
  CHECK_FALSE(single.budget_violation);
  CHECK(single.dominant == "tie");
}

TEST_CASE("phase maxima match a week-by-week search") {
  Rng rng(73);
  for (int rep = 0; rep < 50; ++rep) {
    EnvelopeFit fit;
    fit.taus = {3, 9, 15, 24};
    fit.horizon = 30;
    for (auto& n : fit.nodes) n = rng.uniform() * 100.0;
    fit.refresh_lines();
    const auto maxima = forced_phase_max(fit);
    const std::array<std::size_t, 5> knots{0, 3, 9, 15, 24};
    for (std::size_t r = 0; r < 4; ++r) {
      double best = -1.0;
      for (std::size_t t = knots[r]; t <= knots[r + 1]; ++t) best = std::max(best, adsr_mean(static_cast<double>(t), fit));
      CHECK(maxima[r].value == doctest::Approx(best).epsilon(1e-12));
      CHECK(maxima[r].week >= knots[r]);
      CHECK(maxima[r].week <= knots[r + 1]);
      CHECK(adsr_mean(static_cast<double>(maxima[r].week), fit) == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("segment reallocation matches a budget grid and dominates even splits") {
  Rng rng(74);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<SegmentTarget> segs(2);
    std::array<double, 2> rate{}, capacity{};
    for (int j = 0; j < 2; ++j) {
      segs[j].theta = vec({rng.uniform() * 0.5 + 0.05, rng.uniform() * 0.1});
      segs[j].size = rng.uniform() * 10.0 + 1.0;
      segs[j].ambient = rng.uniform() * 0.5;
      rate[j] = segs[j].size * segs[j].theta.maxCoeff();
      capacity[j] = (1.0 - segs[j].ambient) / segs[j].theta.maxCoeff();
    }
    const double B = rng.uniform() * 8.0;
    const auto r = reallocate_across_segments(segs, B);
    const double grid = oracle::two_segment_grid(B, rate, capacity, 4000);
    CHECK(r.gain >= grid - 1e-9);
    CHECK(r.gain <= grid + rate[0] * B / 4000 + rate[1] * B / 4000 + 1e-9);
    const double even = rate[0] * std::min(B / 2, capacity[0]) + rate[1] * std::min(B / 2, capacity[1]);
    CHECK(r.gain >= even - 1e-12);
    CHECK(r.budget[0] + r.budget[1] + r.unspent == doctest::Approx(B));
  }
}

TEST_CASE("null plans exhaust the budget below the ceiling") {
  const std::size_t T = 6;
  std::vector<WeekState> states(T, WeekState{SegmentWeek{vec({0.05, 0.02}), vec({0.1}), vec({1.0}), 2.0}});
  BudgetPolicy policy{{1.0, 2.0, 0.0, 3.0, 1.5, 0.5}, 0.0};
  const auto plan = plan_horizon(policy, states, Scheme::Null);
  REQUIRE(plan.spend.size() == T);
  for (std::size_t t = 0; t < T; ++t) CHECK(plan.weekly_spend[t] == doctest::Approx(policy.weekly[t]));
  CHECK(plan.total_spend == doctest::Approx(policy.total()));
  CHECK(plan.spend[2][0].isZero());

  BudgetPolicy zero{std::vector<double>(T, 0.0), 0.0};
  const auto idle = plan_horizon(zero, states, Scheme::Null);
  CHECK(idle.total_spend == 0.0);
  CHECK_THROWS_AS((BudgetPolicy{{1.0, -1.0}, 0.0}.validate()), ValidationError);
}

TEST_CASE("forced plans are constant within each phase") {
  const ChangePoints taus{3, 7, 12, 18};
  const std::size_t T = 20;
  std::vector<WeekState> states;
  for (std::size_t t = 0; t < T; ++t) {
    const double effect = 0.02 + 0.01 * static_cast<double>(phase_of(t, taus));
    states.push_back({SegmentWeek{vec({effect}), vec({0.0}), vec({0.0}), 1.0}});
  }
  Rng rng(75);
  BudgetPolicy policy;
  for (std::size_t t = 0; t < T; ++t) policy.weekly.push_back(rng.uniform() * 4.0);
  const auto plan = plan_horizon(policy, states, Scheme::Forced, taus);
  for (int r = 0; r < 4; ++r) {
    const auto [lo, hi] = phase_weeks(static_cast<Phase>(r), taus, T);
    double pooled = 0.0;
    for (std::size_t t = lo; t < hi; ++t) pooled += policy.weekly[t];
    for (std::size_t t = lo; t < hi; ++t) {
      CHECK(plan.weekly_spend[t] == plan.weekly_spend[lo]);
      CHECK(plan.spend[t][0] == plan.spend[lo][0]);
    }
    CHECK(plan.weekly_spend[lo] * static_cast<double>(hi - lo) == doctest::Approx(pooled));
  }
}
