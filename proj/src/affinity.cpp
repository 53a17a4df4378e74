#include "tunedemand/affinity.hpp"

#include <algorithm>
#include <cmath>

#include "tunedemand/error.hpp"

namespace tunedemand {

double inverse_logit(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double affinity_predict(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma, Link link,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  if (theta.size() != x.size() || gamma.size() != z.size()) {
    throw ConfigurationError("affinity_predict: effect and covariate lengths differ");
  }
  const double eta = theta.dot(x) + gamma.dot(z);
  switch (link) {
    case Link::InverseLogit:
      return inverse_logit(eta);
    case Link::IdentityClipped:
      break;
  }
  return std::clamp(eta, 0.0, 1.0);
}

double affinity_predict(const AffinityModel& model, std::size_t segment, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& z) {
  if (segment >= model.segment_count()) {
    throw ConfigurationError("affinity_predict: segment index out of range");
  }
  return affinity_predict(model.theta[segment], model.gamma[segment], model.link, x, z);
}

}  // namespace tunedemand
