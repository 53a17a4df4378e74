#include "tunedemand/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "tunedemand/affinity.hpp"
#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

constexpr double kMaxEta = 50.0;

struct IrlsResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> trace;
};

bool relative_change_small(double previous, double current, double tolerance) {
  return std::abs(current - previous) <= tolerance * (std::abs(previous) + 1e-12);
}

double count_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, CountFamily family,
                            double dispersion) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const auto yi = static_cast<std::int64_t>(y(i));
    ll += family == CountFamily::Poisson ? poisson_log_pmf(yi, mu(i))
                                         : negbin_log_pmf(yi, mu(i), dispersion);
  }
  return ll;
}

Eigen::VectorXd log_link_mean(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
  return (X * beta).array().min(kMaxEta).max(-kMaxEta).exp().matrix();
}

/// Fisher scoring for the log link at a fixed dispersion, with step halving
/// whenever the likelihood would fall.
IrlsResult irls_log_link(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, CountFamily family,
                         double dispersion, Eigen::VectorXd beta, const IrlsOptions& options) {
  IrlsResult out;
  Eigen::VectorXd mu = log_link_mean(X, beta);
  double ll = count_log_likelihood(y, mu, family, dispersion);
  out.trace.push_back(ll);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    Eigen::VectorXd w = mu;
    if (family == CountFamily::NegBin) w = (mu.array() / (1.0 + mu.array() / dispersion)).matrix();
    const Eigen::VectorXd eta = X * beta;
    const Eigen::VectorXd working = eta + ((y - mu).array() / mu.array()).matrix();
    const Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd proposal = xtwx.ldlt().solve(X.transpose() * w.asDiagonal() * working);
    double step = 1.0;
    Eigen::VectorXd next = proposal;
    double next_ll = count_log_likelihood(y, log_link_mean(X, next), family, dispersion);
    while (!(next_ll >= ll - 1e-12 * std::abs(ll)) && step > 1e-6) {
      step *= 0.5;
      next = beta + step * (proposal - beta);
      next_ll = count_log_likelihood(y, log_link_mean(X, next), family, dispersion);
    }
    out.iterations = iter;
    const double previous = ll;
    beta = next;
    mu = log_link_mean(X, beta);
    ll = next_ll;
    out.trace.push_back(ll);
    if (!std::isfinite(ll)) break;
    if (relative_change_small(previous, ll, options.relative_tolerance)) {
      Eigen::VectorXd wf = mu;
      if (family == CountFamily::NegBin) wf = (mu.array() / (1.0 + mu.array() / dispersion)).matrix();
      out.beta = beta;
      out.information = X.transpose() * wf.asDiagonal() * X;
      out.log_likelihood = ll;
      return out;
    }
  }
  throw FitError("count regression did not converge", out.trace);
}

void require_full_rank(const Eigen::MatrixXd& X, const char* who) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    throw ConfigurationError(std::string(who) + ": design matrix is rank deficient");
  }
}

Eigen::VectorXd standard_errors(const Eigen::MatrixXd& covariance) {
  return covariance.diagonal().array().max(0.0).sqrt().matrix();
}

template <typename Cdf>
std::int64_t discrete_quantile(double q, double center, Cdf cdf) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  // Bracket [lo, hi] with cdf(lo) < q <= cdf(hi), then bisect.
  std::int64_t hi = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(center)));
  while (cdf(hi) < q) hi *= 2;
  if (cdf(0) >= q) return 0;
  std::int64_t lo = 0;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (cdf(mid) >= q ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

Eigen::VectorXd RegressionFit::coefficients() const {
  Eigen::VectorXd out(theta.size() + gamma.size());
  out << theta, gamma;
  return out;
}

double RegressionFit::linear_predictor(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
  if (x.size() + 1 != theta.size() || z.size() != gamma.size()) {
    throw ConfigurationError("covariates do not match fitted dimensions");
  }
  return theta.head(x.size()).dot(x) + intercept() + gamma.dot(z);
}

Eigen::MatrixXd design_with_intercept(const CovariatePath& covariates) {
  const auto T = static_cast<Eigen::Index>(covariates.horizon());
  const auto C = static_cast<Eigen::Index>(covariates.channels());
  const auto D = static_cast<Eigen::Index>(covariates.ambient());
  Eigen::MatrixXd X(T, C + 1 + D);
  X.leftCols(C) = covariates.endogenous;
  X.col(C).setOnes();
  X.rightCols(D) = covariates.exogenous;
  return X;
}

RegressionFit fit_logistic(std::span<const BinaryObservation> observations, int segment_id,
                           const IrlsOptions& options) {
  const std::string who = "fit_logistic(segment " + std::to_string(segment_id) + ")";
  if (observations.empty()) throw ConfigurationError(who + ": no observations");
  const auto C = observations.front().x.size();
  const auto D = observations.front().z.size();
  const auto p = C + 1 + D;
  const auto n = static_cast<Eigen::Index>(observations.size());
  if (n < p) throw ConfigurationError(who + ": fewer observations than coefficients");

  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = observations[static_cast<std::size_t>(i)];
    if (o.x.size() != C || o.z.size() != D) throw ConfigurationError(who + ": ragged covariates");
    if (o.response != 0 && o.response != 1) throw DomainError(who + ": responses must be 0 or 1");
    X.row(i) << o.x.transpose(), 1.0, o.z.transpose();
    y(i) = o.response;
  }
  require_full_rank(X, who.c_str());
  const double ones = y.sum();
  if (ones == 0.0 || ones == static_cast<double>(n)) {
    throw FitError(who + ": complete separation, every response is identical");
  }

  auto log_likelihood = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log sigma(eta) = -log1p(exp(-eta)), log(1 - sigma(eta)) = -log1p(exp(eta))
      const double e = eta(i);
      const double log_p = e >= 0 ? -std::log1p(std::exp(-e)) : e - std::log1p(std::exp(e));
      const double log_q = e >= 0 ? -e - std::log1p(std::exp(-e)) : -std::log1p(std::exp(e));
      ll += y(i) * log_p + (1.0 - y(i)) * log_q;
    }
    return ll;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = log_likelihood(X * beta);
  std::vector<double> trace{ll};
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = inverse_logit(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    const Eigen::VectorXd working = eta + ((y - mu).array() / w.array()).matrix();
    const Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
    beta = xtwx.ldlt().solve(X.transpose() * w.asDiagonal() * working);
    const double previous = ll;
    ll = log_likelihood(X * beta);
    trace.push_back(ll);
    if (!std::isfinite(ll) || beta.cwiseAbs().maxCoeff() > 1e3) {
      throw FitError(who + ": coefficients diverge (quasi-separation)", trace);
    }
    if (relative_change_small(previous, ll, options.relative_tolerance)) {
      const Eigen::VectorXd eta_f = X * beta;
      Eigen::VectorXd wf(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = inverse_logit(eta_f(i));
        wf(i) = m * (1.0 - m);
      }
      RegressionFit fit;
      fit.theta = beta.head(C + 1);
      fit.gamma = beta.tail(D);
      fit.covariance = (X.transpose() * wf.asDiagonal() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
      fit.std_errors = standard_errors(fit.covariance);
      fit.log_likelihood = ll;
      fit.link = RegressionLink::Logit;
      fit.iterations = iter;
      return fit;
    }
  }
  throw FitError(who + ": no convergence within the iteration cap", trace);
}

double negbin_strata_log_pmf(std::int64_t n, std::int64_t y, double p) {
  if (y < 1 || n < y) throw DomainError("negbin_strata_pmf requires n >= y >= 1");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("negbin_strata_pmf requires 0 < p < 1");
  const double nd = static_cast<double>(n);
  const double yd = static_cast<double>(y);
  const double log_choose = std::lgamma(nd) - std::lgamma(yd) - std::lgamma(nd - yd + 1.0);
  return log_choose + yd * std::log(p) + (nd - yd) * std::log1p(-p);
}

double negbin_strata_pmf(std::int64_t n, std::int64_t y, double p) {
  return std::exp(negbin_strata_log_pmf(n, y, p));
}

double poisson_log_pmf(std::int64_t y, double mean) {
  if (mean <= 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const double yd = static_cast<double>(y);
  return yd * std::log(mean) - mean - std::lgamma(yd + 1.0);
}

double negbin_log_pmf(std::int64_t y, double mean, double dispersion) {
  if (mean <= 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const double yd = static_cast<double>(y);
  const double w = dispersion;
  return std::lgamma(yd + w) - std::lgamma(w) - std::lgamma(yd + 1.0) +
         w * (std::log(w) - std::log(w + mean)) + yd * (std::log(mean) - std::log(w + mean));
}

std::int64_t poisson_quantile(double mean, double q) {
  if (mean <= 0.0) return 0;
  return discrete_quantile(q, mean, [mean](std::int64_t k) {
    return boost::math::gamma_q(static_cast<double>(k) + 1.0, mean);
  });
}

std::int64_t negbin_quantile(double mean, double dispersion, double q) {
  if (mean <= 0.0) return 0;
  const double success = dispersion / (dispersion + mean);
  return discrete_quantile(q, mean, [=](std::int64_t k) {
    return boost::math::ibeta(dispersion, static_cast<double>(k) + 1.0, success);
  });
}

RegressionFit fit_count_regression(const DemandCurve& curve, const CovariatePath& covariates,
                                   CountFamily family, const IrlsOptions& options) {
  curve.validate();
  if (curve.horizon() != covariates.horizon()) {
    throw ConfigurationError("fit_count_regression: curve and covariate horizons differ");
  }
  const auto C = covariates.channels();
  const auto D = covariates.ambient();
  if (curve.horizon() < C + D + 2) {
    throw ConfigurationError("fit_count_regression: need at least C + D + 2 weeks");
  }
  const Eigen::MatrixXd X = design_with_intercept(covariates);
  require_full_rank(X, "fit_count_regression");
  Eigen::VectorXd y(static_cast<Eigen::Index>(curve.horizon()));
  for (std::size_t t = 0; t < curve.horizon(); ++t) y(static_cast<Eigen::Index>(t)) = static_cast<double>(curve.values[t]);
  if (y.sum() == 0.0) throw FitError("fit_count_regression: series is all zeros");

  Eigen::VectorXd start = Eigen::VectorXd::Zero(X.cols());
  start(static_cast<Eigen::Index>(C)) = std::log(y.mean());

  IrlsResult result;
  std::optional<double> dispersion;
  std::optional<double> dispersion_se;
  if (family == CountFamily::Poisson) {
    result = irls_log_link(X, y, family, 0.0, start, options);
  } else {
    // Profile likelihood over log(dispersion); beta warm-starts across evaluations.
    Eigen::VectorXd warm = irls_log_link(X, y, CountFamily::Poisson, 0.0, start, options).beta;
    auto negative_profile = [&](double log_w) {
      try {
        auto r = irls_log_link(X, y, CountFamily::NegBin, std::exp(log_w), warm, options);
        warm = r.beta;
        return -r.log_likelihood;
      } catch (const FitError&) {
        return std::numeric_limits<double>::max();
      }
    };
    const double lo = std::log(1e-3);
    const double hi = std::log(1e6);
    const auto [log_w, neg_ll] = boost::math::tools::brent_find_minima(negative_profile, lo, hi, 40);
    (void)neg_ll;
    dispersion = std::exp(log_w);
    result = irls_log_link(X, y, CountFamily::NegBin, *dispersion, warm, options);
    const double h = 1e-3;
    const double curvature =
        (negative_profile(log_w + h) - 2.0 * negative_profile(log_w) + negative_profile(log_w - h)) /
        (h * h);
    if (curvature > 0.0) dispersion_se = *dispersion / std::sqrt(curvature);
  }

  RegressionFit fit;
  fit.family = family;
  fit.link = RegressionLink::Log;
  fit.theta = result.beta.head(static_cast<Eigen::Index>(C + 1));
  fit.gamma = result.beta.tail(static_cast<Eigen::Index>(D));
  fit.covariance = result.information.ldlt().solve(
      Eigen::MatrixXd::Identity(result.information.rows(), result.information.cols()));
  fit.std_errors = standard_errors(fit.covariance);
  fit.log_likelihood = result.log_likelihood;
  fit.iterations = result.iterations;
  fit.dispersion = dispersion;
  fit.dispersion_se = dispersion_se;
  return fit;
}

ControlChart conditional_demand_chart(const RegressionFit& fit, const CovariatePath& proposed,
                                      double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("band level must lie in (0, 1)");
  ControlChart chart;
  chart.level = level;
  const double q_lo = 0.5 * (1.0 - level);
  const double q_hi = 0.5 * (1.0 + level);
  for (std::size_t t = 0; t < proposed.horizon(); ++t) {
    const double mean = std::exp(fit.linear_predictor(proposed.x(t), proposed.z(t)));
    double lo = 0.0;
    double hi = 0.0;
    if (fit.family == CountFamily::NegBin && fit.dispersion) {
      lo = static_cast<double>(negbin_quantile(mean, *fit.dispersion, q_lo));
      hi = static_cast<double>(negbin_quantile(mean, *fit.dispersion, q_hi));
    } else {
      lo = static_cast<double>(poisson_quantile(mean, q_lo));
      hi = static_cast<double>(poisson_quantile(mean, q_hi));
    }
    // Discrete quantiles can sit on the wrong side of a sub-unit mean.
    chart.mean.push_back(mean);
    chart.lower.push_back(std::min(lo, mean));
    chart.upper.push_back(std::max(hi, mean));
  }
  return chart;
}

}  // namespace tunedemand
