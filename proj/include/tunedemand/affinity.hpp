#pragma once

#include <Eigen/Dense>

#include "tunedemand/core_model.hpp"

namespace tunedemand {

double inverse_logit(double eta) noexcept;

/// Listening probability for effects (theta, gamma) at covariates (x, z).
/// InverseLogit: 1 / (1 + exp(-(theta.x + gamma.z))); IdentityClipped:
/// the linear predictor clamped to [0, 1].
double affinity_predict(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma, Link link,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& z);

double affinity_predict(const AffinityModel& model, std::size_t segment,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& z);

}  // namespace tunedemand
