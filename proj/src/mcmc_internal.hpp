#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "tunedemand/estimation.hpp"
#include "tunedemand/rng.hpp"

namespace tunedemand::detail {

inline double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double chi_squared_log_pdf(double x, double dof) {
  return gamma_log_pdf(x, 0.5 * dof, 0.5);
}

inline double accept_probability(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

/// Random-walk proposal whose global scale follows a Robbins-Monro
/// recursion toward `target` acceptance during warmup. Multivariate blocks
/// also swap their proposal shape for the empirical covariance collected
/// over the second quarter of warmup. Nothing changes after warmup.
class RandomWalkAdapter {
 public:
  RandomWalkAdapter() = default;
  RandomWalkAdapter(int dimension, const Eigen::MatrixXd& initial_covariance, int warmup)
      : dim_(dimension), warmup_(warmup) {
    target_ = dimension == 1 ? 0.44 : 0.30;
    log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(std::max(dimension, 1))));
    set_shape(initial_covariance);
    sum_ = Eigen::VectorXd::Zero(dimension);
    outer_ = Eigen::MatrixXd::Zero(dimension, dimension);
  }

  Eigen::VectorXd step(Rng& rng) const {
    Eigen::VectorXd eps(dim_);
    for (int i = 0; i < dim_; ++i) eps(i) = rng.normal();
    return std::exp(log_scale_) * (chol_ * eps);
  }

  double scalar_step(Rng& rng) const { return std::exp(log_scale_) * chol_(0, 0) * rng.normal(); }

  void record(bool accepted, int iteration, const Eigen::VectorXd& state) {
    if (iteration < warmup_) {
      const double rate = 1.0 / std::pow(iteration + 1.0, 0.6);
      log_scale_ += rate * ((accepted ? 1.0 : 0.0) - target_);
      log_scale_ = std::clamp(log_scale_, -25.0, 6.0);
      if (dim_ > 1 && iteration >= warmup_ / 4 && iteration < warmup_ / 2) {
        sum_ += state;
        outer_ += state * state.transpose();
        ++n_;
      }
      if (dim_ > 1 && iteration + 1 == warmup_ / 2 && n_ > 4 * dim_) {
        const Eigen::VectorXd mean = sum_ / static_cast<double>(n_);
        Eigen::MatrixXd cov = outer_ / static_cast<double>(n_) - mean * mean.transpose();
        cov += 1e-10 * Eigen::MatrixXd::Identity(dim_, dim_);
        if (set_shape(cov)) log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(dim_)));
      }
    } else {
      ++proposals_;
      if (accepted) ++accepts_;
    }
  }

  double acceptance_rate() const {
    return proposals_ == 0 ? 0.0 : static_cast<double>(accepts_) / static_cast<double>(proposals_);
  }
  long proposals() const { return proposals_; }
  long accepts() const { return accepts_; }

 private:
  bool set_shape(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      if (chol_.size() == 0) chol_ = Eigen::MatrixXd::Identity(dim_, dim_);
      return false;
    }
    chol_ = llt.matrixL();
    return true;
  }

  int dim_ = 1;
  int warmup_ = 0;
  double target_ = 0.3;
  double log_scale_ = 0.0;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd outer_;
  long n_ = 0;
  long proposals_ = 0;
  long accepts_ = 0;
};

/// Sum of NegBin log densities with mean exp(eta), eta clamped to +-50.
inline double negbin_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& eta,
                                    double dispersion) {
  double ll = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double mean = std::exp(std::clamp(eta(t), -50.0, 50.0));
    ll += negbin_log_pmf(static_cast<std::int64_t>(y(t)), mean, dispersion);
  }
  return ll;
}

/// Type-1 empirical quantile (smallest value whose ECDF reaches q) of a
/// sorted sample; keeps quantile curves ordered by level.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  const auto n = sorted.size();
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  return sorted[k - 1];
}

}  // namespace tunedemand::detail
