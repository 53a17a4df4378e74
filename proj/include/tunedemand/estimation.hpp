#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/core_model.hpp"

namespace tunedemand {

enum class CountFamily { Poisson, NegBin };
enum class RegressionLink { Logit, Log };

/// Maximum-likelihood fit. `theta` carries the C channel effects followed by
/// the intercept (an always-one pseudo-channel appended to x); `gamma` the
/// D ambient effects. `std_errors` and `covariance` follow the same order,
/// theta first.
struct RegressionFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd gamma;
  std::optional<double> dispersion;
  std::optional<double> dispersion_se;
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd covariance;
  double log_likelihood = 0.0;
  RegressionLink link = RegressionLink::Log;
  CountFamily family = CountFamily::Poisson;
  int iterations = 0;

  std::size_t channels() const noexcept { return static_cast<std::size_t>(theta.size()) - 1; }
  double intercept() const { return theta(theta.size() - 1); }
  Eigen::VectorXd coefficients() const;
  double linear_predictor(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const;
};

struct BinaryObservation {
  Eigen::VectorXd x;
  Eigen::VectorXd z;
  int response = 0;
};

struct IrlsOptions {
  double relative_tolerance = 1e-8;
  int max_iterations = 100;
};

/// Logistic regression of listening bits on (x, 1, z) by iteratively
/// reweighted least squares. Throws FitError on separation or when the cap
/// is reached, ConfigurationError on a rank-deficient design.
RegressionFit fit_logistic(std::span<const BinaryObservation> observations, int segment_id,
                           const IrlsOptions& options = {});

/// Probability that the y-th listener arrives on the n-th trial:
/// C(n-1, y-1) p^y (1-p)^(n-y). Throws DomainError unless n >= y >= 1 and
/// 0 < p < 1.
double negbin_strata_pmf(std::int64_t n, std::int64_t y, double p);
double negbin_strata_log_pmf(std::int64_t n, std::int64_t y, double p);

/// Count-regression log densities in (mean, dispersion) form: variance
/// mean + mean^2 / dispersion.
double poisson_log_pmf(std::int64_t y, double mean);
double negbin_log_pmf(std::int64_t y, double mean, double dispersion);

/// Smallest k with P(Y <= k) >= q.
std::int64_t poisson_quantile(double mean, double q);
std::int64_t negbin_quantile(double mean, double dispersion, double q);

/// Log-link regression log E(Y_t) = theta.x_t + gamma.z_t of one curve.
/// NegBin dispersion is chosen by maximizing the profile likelihood.
RegressionFit fit_count_regression(const DemandCurve& curve, const CovariatePath& covariates,
                                   CountFamily family, const IrlsOptions& options = {});

struct ControlChart {
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
  double level = 0.9;
};

/// Predicted weekly mean under `proposed` covariates, with family quantile
/// bands at (1 - level) / 2 and (1 + level) / 2.
ControlChart conditional_demand_chart(const RegressionFit& fit, const CovariatePath& proposed,
                                      double level = 0.9);

/// Rows [x_t, 1, z_t] for t = 0..T-1.
Eigen::MatrixXd design_with_intercept(const CovariatePath& covariates);

}  // namespace tunedemand
