#pragma once

#include <vector>

#include <Eigen/Dense>

#include "tunedemand/rng.hpp"

namespace tunedemand {

/// Correlation matrix drawn from LKJ(eta) by the onion construction.
/// Throws DomainError for dimension < 2 or eta <= 0.
Eigen::MatrixXd sample_lkj(int dimension, double eta, Rng& rng);

/// Same construction, also accepting dimension 0 and 1 (returned as the
/// identity) for hierarchies whose blocks may be scalar.
Eigen::MatrixXd sample_lkj_any(int dimension, double eta, Rng& rng);

/// Symmetric, unit diagonal, positive definite (checked by Cholesky).
bool is_correlation_matrix(const Eigen::MatrixXd& m, double tolerance = 1e-9);

/// log N(x; mean, cov). Returns -inf when cov is not positive definite.
double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& covariance);

/// diag(scale) * corr * diag(scale).
Eigen::MatrixXd scaled_covariance(const Eigen::MatrixXd& correlation, const Eigen::VectorXd& scale);

/// P(X >= 0) for X ~ N(mean, cov). Exact for dimension <= 1, adaptive
/// quadrature for 2, and a fixed-point quasi-Monte-Carlo estimate of the
/// Genz separation-of-variables integral above that.
double positive_orthant_probability(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance);

/// Rejection sampler for N(mean, cov) restricted to the positive orthant.
Eigen::VectorXd sample_truncated_normal(const Eigen::VectorXd& mean,
                                        const Eigen::MatrixXd& covariance, Rng& rng);

}  // namespace tunedemand
