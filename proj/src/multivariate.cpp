#include "tunedemand/multivariate.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double std_normal_quantile(double p) {
  p = std::clamp(p, 1e-300, 1.0 - 1e-16);
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double radical_inverse(unsigned index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * (index % base);
    index /= base;
    f /= base;
  }
  return result;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
constexpr unsigned kQmcPoints = 4096;

}  // namespace

Eigen::MatrixXd sample_lkj_any(int dimension, double eta, Rng& rng) {
  if (!(eta > 0.0)) throw DomainError("LKJ concentration must be positive");
  if (dimension < 0) throw DomainError("negative LKJ dimension");
  if (dimension <= 1) return Eigen::MatrixXd::Identity(dimension, dimension);
  const double tiny = 1e-12;
  double beta = eta + (dimension - 2) / 2.0;
  const double r12 = 2.0 * std::clamp(rng.beta(beta, beta), tiny, 1.0 - tiny) - 1.0;
  Eigen::MatrixXd r(2, 2);
  r << 1.0, r12, r12, 1.0;
  for (int m = 2; m < dimension; ++m) {
    beta -= 0.5;
    const double y = std::clamp(rng.beta(m / 2.0, beta), 0.0, 1.0 - tiny);
    Eigen::VectorXd u(m);
    for (int i = 0; i < m; ++i) u(i) = rng.normal();
    u.normalize();
    const Eigen::VectorXd w = std::sqrt(y) * u;
    const Eigen::MatrixXd lower = r.llt().matrixL();
    const Eigen::VectorXd z = lower * w;
    Eigen::MatrixXd next(m + 1, m + 1);
    next.topLeftCorner(m, m) = r;
    next.block(0, m, m, 1) = z;
    next.block(m, 0, 1, m) = z.transpose();
    next(m, m) = 1.0;
    r = std::move(next);
  }
  return r;
}

Eigen::MatrixXd sample_lkj(int dimension, double eta, Rng& rng) {
  if (dimension < 2) throw DomainError("LKJ dimension must be at least 2");
  return sample_lkj_any(dimension, eta, rng);
}

bool is_correlation_matrix(const Eigen::MatrixXd& m, double tolerance) {
  if (m.rows() != m.cols()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tolerance) return false;
  if ((m.diagonal().array() - 1.0).abs().maxCoeff() > tolerance) return false;
  return m.llt().info() == Eigen::Success;
}

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& covariance) {
  const auto k = x.size();
  if (k == 0) return 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd lower = llt.matrixL();
  const Eigen::VectorXd solved = lower.triangularView<Eigen::Lower>().solve(x - mean);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) log_det += std::log(lower(i, i));
  return -0.5 * solved.squaredNorm() - log_det - 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
}

Eigen::MatrixXd scaled_covariance(const Eigen::MatrixXd& correlation, const Eigen::VectorXd& scale) {
  return scale.asDiagonal() * correlation * scale.asDiagonal();
}

double positive_orthant_probability(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance) {
  const auto k = mean.size();
  if (k == 0) return 1.0;
  if (k == 1) return std_normal_cdf(mean(0) / std::sqrt(covariance(0, 0)));
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::MatrixXd lower = llt.matrixL();
  // P(W <= mean) with W ~ N(0, cov) equals P(X >= 0).
  const double e1 = std_normal_cdf(mean(0) / lower(0, 0));
  if (k == 2) {
    auto integrand = [&](double w) {
      const double y1 = std_normal_quantile(w * e1);
      return std_normal_cdf((mean(1) - lower(1, 0) * y1) / lower(1, 1));
    };
    return e1 * boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, 1.0, 12, 1e-12);
  }
  if (k > static_cast<Eigen::Index>(std::size(kPrimes)) + 1) {
    throw DomainError("orthant probability supports at most 17 dimensions");
  }
  double total = 0.0;
  Eigen::VectorXd y(k);
  for (unsigned n = 1; n <= kQmcPoints; ++n) {
    double f = e1;
    y(0) = std_normal_quantile(radical_inverse(n, kPrimes[0]) * e1);
    for (Eigen::Index i = 1; i < k; ++i) {
      const double shift = lower.row(i).head(i).dot(y.head(i));
      const double ei = std_normal_cdf((mean(i) - shift) / lower(i, i));
      f *= ei;
      if (i + 1 < k) y(i) = std_normal_quantile(radical_inverse(n, kPrimes[i]) * ei);
    }
    total += f;
  }
  return total / kQmcPoints;
}

Eigen::VectorXd sample_truncated_normal(const Eigen::VectorXd& mean,
                                        const Eigen::MatrixXd& covariance, Rng& rng) {
  const auto k = mean.size();
  if (k == 0) return Eigen::VectorXd();
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw DomainError("truncated normal covariance not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  Eigen::VectorXd u(k);
  for (int attempt = 0; attempt < 1'000'000; ++attempt) {
    for (Eigen::Index i = 0; i < k; ++i) u(i) = rng.normal();
    Eigen::VectorXd x = mean + lower * u;
    if (x.minCoeff() >= 0.0) return x;
  }
  throw DomainError("truncated normal has negligible mass on the positive orthant");
}

}  // namespace tunedemand
