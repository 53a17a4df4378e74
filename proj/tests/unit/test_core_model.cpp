#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tunedemand/affinity.hpp"
#include "tunedemand/core_model.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

namespace {

AffinityModel identity_model(std::vector<double> probabilities) {
  AffinityModel m;
  for (double p : probabilities) {
    m.theta.push_back(Eigen::VectorXd::Constant(1, p));
    m.gamma.push_back(Eigen::VectorXd(0));
  }
  m.link = Link::IdentityClipped;
  return m;
}

CovariatePath ones(std::size_t T) { return CovariatePath(Eigen::MatrixXd::Ones(T, 1), Eigen::MatrixXd(T, 0)); }

Membership range(ListenerId lo, ListenerId hi) {
  Membership m;
  for (auto i = lo; i < hi; ++i) m.push_back(i);
  return m;
}

}  // namespace

TEST_CASE("rng streams are reproducible and split independently of consumption") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  Rng c(42);
  const auto child_before = c.split(3)();
  for (int i = 0; i < 10; ++i) c();
  CHECK(c.split(3)() == child_before);
  CHECK(Rng(42).split(1)() != Rng(42).split(2)());
  CHECK(Rng(1)() != Rng(2)());
}

TEST_CASE("draw_utility") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(draw_utility(0.0, rng) == 0);
    CHECK(draw_utility(1.0, rng) == 1);
  }
  CHECK_THROWS_AS(draw_utility(-0.1, rng), DomainError);
  CHECK_THROWS_AS(draw_utility(1.1, rng), DomainError);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += draw_utility(0.5, rng);
  CHECK(sum / 10000.0 >= 0.485);
  CHECK(sum / 10000.0 <= 0.515);
}

TEST_CASE("simulate_segment_demand") {
  Rng rng(2);
  const auto x = ones(4);
  const auto fifty = range(0, 50);
  CHECK(simulate_segment_demand(fifty, identity_model({0.0}), 0, x, 0, rng) == 0);
  const auto one = range(0, 1);
  CHECK(simulate_segment_demand(one, identity_model({1.0}), 0, x, 0, rng) == 1);

  const auto hundred = range(0, 100);
  double sum = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const auto n = simulate_segment_demand(hundred, identity_model({0.2}), 0, x, 1, rng);
    CHECK(n >= 0);
    CHECK(n <= 100);
    sum += static_cast<double>(n);
  }
  CHECK(std::abs(sum / 1000.0 - 20.0) <= 1.2);

  AffinityModel wrong = identity_model({0.5});
  wrong.theta[0] = Eigen::VectorXd::Constant(2, 0.1);
  CHECK_THROWS_AS(simulate_segment_demand(hundred, wrong, 0, x, 0, rng), ConfigurationError);
}

TEST_CASE("aggregate_demand") {
  DemandCurve a{"s", 0, {10, 5}}, b{"s", 1, {15, 7}};
  std::vector<DemandCurve> both{a, b};
  CHECK(aggregate_demand(both).values == std::vector<std::int64_t>{25, 12});
  CHECK(aggregate_demand(std::vector<DemandCurve>{a}).values == a.values);
  std::vector<DemandCurve> zeros(3, DemandCurve{"s", 0, {0, 0, 0}});
  CHECK(aggregate_demand(zeros).values == std::vector<std::int64_t>{0, 0, 0});
  std::vector<DemandCurve> bad{a, DemandCurve{"s", 1, {1, 2, 3}}};
  CHECK_THROWS_AS(aggregate_demand(bad), DomainError);
}

TEST_CASE("extremal curves bracket every segment") {
  const std::size_t N = 1000, T = 4;
  auto covering = SegmentCovering::constant(N, T, {range(0, 600), range(400, 1000)});
  const auto model = identity_model({0.1, 0.5});
  Rng rng(3);
  double upper = 0.0, lower = 0.0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    const auto e = extremal_curves(covering, model, ones(T), rng);
    for (std::size_t t = 0; t < T; ++t) CHECK(e.lower.values[t] <= e.upper.values[t]);
    upper += static_cast<double>(e.upper.values[0]);
    lower += static_cast<double>(e.lower.values[0]);
  }
  upper /= reps;
  lower /= reps;
  CHECK(std::abs(upper - 500.0) <= 3.0 * std::sqrt(1000 * 0.25 / reps));
  CHECK(std::abs(lower - 100.0) <= 3.0 * std::sqrt(1000 * 0.09 / reps));

  // Equal affinities: both boundaries are the same draw.
  const auto e = extremal_curves(covering, identity_model({0.3, 0.3}), ones(T), rng);
  CHECK(e.upper.values == e.lower.values);
}

TEST_CASE("sparse_audience") {
  auto at = [](std::vector<Membership> segs, std::size_t n) { return sparse_audience(SegmentCovering::constant(n, 4, segs), 0); };
  CHECK(at({{1, 2, 3}, {3, 4}}, 5) == Membership{1, 2, 4});
  CHECK(at({{0, 1}, {2, 3}}, 4) == Membership{0, 1, 2, 3});
  CHECK(at({{0, 1, 2}, {0, 1, 2}}, 3).empty());
}

TEST_CASE("verify_covering") {
  auto report = verify_covering(SegmentCovering::constant(3, 4, {{0, 1}, {1, 2}}));
  CHECK(report.union_size[0] == 3);
  CHECK(report.total_size[0] == 4);
  try {
    verify_covering(SegmentCovering::constant(3, 4, {{0}, {1}}));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.details().front() == "0:2");
  }
  report = verify_covering(SegmentCovering::constant(3, 4, {{0, 1, 2}}));
  CHECK(report.union_size[0] == report.total_size[0]);
}

TEST_CASE("simulation is deterministic per seed and bounded by segment size") {
  auto covering = SegmentCovering::constant(200, 10, {range(0, 120), range(80, 200)});
  const auto model = identity_model({0.3, 0.7});
  Rng a(9), b(9);
  const auto c1 = simulate_demand(covering, model, ones(10), a, "song");
  const auto c2 = simulate_demand(covering, model, ones(10), b, "song");
  CHECK(c1 == c2);
  for (const auto& c : c1)
    for (auto v : c.values) CHECK((v >= 0 && v <= 120));
}

TEST_CASE("affinity_predict") {
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 2.0), gamma = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.5), z = Eigen::VectorXd::Constant(1, 0.3);
  CHECK(affinity_predict(theta, gamma, Link::InverseLogit, x, z) == doctest::Approx(1.0 / (1.0 + std::exp(-1.3))).epsilon(1e-12));
  CHECK(affinity_predict(theta, gamma, Link::InverseLogit, x * 0.0, z * 0.0) == 0.5);
  const Eigen::VectorXd big = Eigen::VectorXd::Constant(1, 0.6);
  CHECK(affinity_predict(theta, gamma, Link::IdentityClipped, big, Eigen::VectorXd::Zero(1)) == 1.0);
  double last = 0.0;
  for (double v = 0.0; v <= 1.0; v += 0.1) {
    const double p = affinity_predict(theta, gamma, Link::InverseLogit, Eigen::VectorXd::Constant(1, v), z);
    CHECK(p > last);
    last = p;
  }
}
