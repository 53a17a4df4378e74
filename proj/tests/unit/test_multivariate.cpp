#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tunedemand/diagnostics.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/multivariate.hpp"
#include "tunedemand/rng.hpp"

using namespace tunedemand;

TEST_CASE("LKJ draws") {
  Rng rng(21);
  double mean_r = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto m = sample_lkj(2, 1.0, rng);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == m(1, 0));
    CHECK(std::abs(m(0, 1)) < 1.0);
    mean_r += m(0, 1);
  }
  CHECK(std::abs(mean_r / 10000.0) <= 0.02);

  double off = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto m = sample_lkj(3, 100.0, rng);
    CHECK(is_correlation_matrix(m));
    off += (std::abs(m(0, 1)) + std::abs(m(0, 2)) + std::abs(m(1, 2))) / 3.0;
  }
  CHECK(off / 10000.0 < 0.1);

  for (int i = 0; i < 200; ++i) CHECK(is_correlation_matrix(sample_lkj(5, 0.5, rng)));
  CHECK_THROWS_AS(sample_lkj(2, 0.0, rng), DomainError);
  CHECK_THROWS_AS(sample_lkj(1, 1.0, rng), DomainError);
  CHECK(sample_lkj_any(1, 1.0, rng).isIdentity());
}

TEST_CASE("multivariate normal density") {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.5, 0.5, 1.0;
  const Eigen::Vector2d x(0.3, -0.2), mu(0.1, 0.1);
  const Eigen::Vector2d d = x - mu;
  const double expected = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) - 0.5 * d.dot(cov.inverse() * d);
  CHECK(mvn_log_density(x, mu, cov) == doctest::Approx(expected).epsilon(1e-12));
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK(std::isinf(mvn_log_density(x, mu, bad)));
}

TEST_CASE("positive orthant probabilities") {
  const double pi = std::numbers::pi;
  CHECK(positive_orthant_probability(Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Identity(1, 1)) ==
        doctest::Approx(0.5).epsilon(1e-12));
  for (double rho : {-0.7, 0.0, 0.4, 0.9}) {
    Eigen::Matrix2d R;
    R << 1.0, rho, rho, 1.0;
    CHECK(positive_orthant_probability(Eigen::Vector2d::Zero(), R) == doctest::Approx(0.25 + std::asin(rho) / (2 * pi)).epsilon(1e-7));
  }
  Eigen::Matrix3d R;
  R << 1.0, 0.3, 0.5, 0.3, 1.0, -0.2, 0.5, -0.2, 1.0;
  const double exact = 0.125 + (std::asin(0.3) + std::asin(0.5) + std::asin(-0.2)) / (4 * pi);
  CHECK(std::abs(positive_orthant_probability(Eigen::Vector3d::Zero(), R) - exact) < 2e-3);

  Rng rng(22);
  const Eigen::Vector3d mean(0.2, -0.1, 0.4);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    const auto v = sample_truncated_normal(mean, R, rng);
    hits += (v.array() >= 0.0).all();
  }
  CHECK(hits == 200);
}

TEST_CASE("R-hat and effective sample size") {
  Rng rng(23);
  std::vector<std::vector<double>> iid(4, std::vector<double>(1000));
  for (auto& c : iid)
    for (auto& v : c) v = rng.normal();
  CHECK(split_rhat(iid) == doctest::Approx(1.0).epsilon(0.02));
  const double ess = effective_sample_size(iid);
  CHECK(ess > 3000.0);
  CHECK(ess < 5000.0);

  auto shifted = iid;
  for (std::size_t c = 0; c < shifted.size(); ++c)
    for (auto& v : shifted[c]) v += 3.0 * static_cast<double>(c);
  CHECK(split_rhat(shifted) > 1.5);

  // AR(1) with rho 0.9: ESS near N (1 - rho) / (1 + rho).
  std::vector<std::vector<double>> ar(4, std::vector<double>(5000));
  for (auto& c : ar) {
    double prev = 0.0;
    for (auto& v : c) v = prev = 0.9 * prev + rng.normal();
  }
  const double ar_ess = effective_sample_size(ar);
  CHECK(ar_ess > 20000.0 * 0.0526 * 0.6);
  CHECK(ar_ess < 20000.0 * 0.0526 * 1.6);
}
