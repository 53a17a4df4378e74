#include "tunedemand/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "mcmc_internal.hpp"
#include "tunedemand/diagnostics.hpp"
#include "tunedemand/error.hpp"
#include "tunedemand/estimation.hpp"
#include "tunedemand/multivariate.hpp"

namespace tunedemand {
namespace {

using detail::accept_probability;
using detail::RandomWalkAdapter;

std::string indexed(const std::string& base, std::initializer_list<std::size_t> idx) {
  std::ostringstream os;
  os << base << '[';
  bool first = true;
  for (auto i : idx) {
    if (!first) os << ',';
    os << i;
    first = false;
  }
  os << ']';
  return os.str();
}

void check_data(const NullModelData& data, const NullModelSpec& spec) {
  spec.validate();
  if (data.segments.size() != spec.segment_count()) {
    throw ConfigurationError("data and spec disagree on the number of segments");
  }
  const auto T = data.horizon();
  if (T < 8) throw ConfigurationError("null model needs at least 8 weeks");
  bool any_positive = false;
  for (const auto& s : data.segments) {
    s.curve.validate();
    if (s.curve.horizon() != T || s.covariates.horizon() != T) {
      throw ConfigurationError("segments have different horizons");
    }
    if (s.covariates.channels() != spec.channels || s.covariates.ambient() != spec.ambient) {
      throw ConfigurationError("segment covariates do not match spec dimensions");
    }
    for (auto v : s.curve.values) any_positive = any_positive || v > 0;
  }
  if (!any_positive) throw FitError("null model: every segment is all zeros");
}

/// Per-chain sampler state. Everything indexed by global segment id.
class NullChain {
 public:
  NullChain(const NullModelData& data, const NullModelSpec& spec, const McmcConfig& config,
            const NullParameters& start, const std::vector<Eigen::MatrixXd>& theta_cov,
            const std::vector<Eigen::MatrixXd>& gamma_cov, Rng rng)
      : spec_(spec), config_(config), layout_(spec), state_(start), rng_(std::move(rng)) {
    const auto J = spec.segment_count();
    for (std::size_t j = 0; j < J; ++j) {
      // Prior-only runs need no data at all.
      if (j < data.segments.size()) {
        const auto& s = data.segments[j];
        design_x_.push_back(design_with_intercept(CovariatePath(s.covariates.endogenous,
                                                                Eigen::MatrixXd(s.covariates.horizon(), 0))));
        design_z_.push_back(s.covariates.exogenous);
        Eigen::VectorXd y(static_cast<Eigen::Index>(s.curve.horizon()));
        for (std::size_t t = 0; t < s.curve.horizon(); ++t) y(static_cast<Eigen::Index>(t)) = static_cast<double>(s.curve.values[t]);
        y_.push_back(std::move(y));
      }
      theta_adapt_.emplace_back(static_cast<int>(spec.theta_size()), theta_cov[j], config.warmup);
      if (spec.ambient > 0) gamma_adapt_.emplace_back(static_cast<int>(spec.ambient), gamma_cov[j], config.warmup);
      omega_adapt_.emplace_back(1, Eigen::MatrixXd::Constant(1, 1, 0.25), config.warmup);
      loglik_.push_back(segment_loglik(j, state_.theta[j], state_.gamma[j], state_.omega[j]));
    }
    for (std::size_t a = 0; a < spec.artists.size(); ++a) {
      eta_x_adapt_.emplace_back(1, Eigen::MatrixXd::Constant(1, 1, 0.25), config.warmup);
      eta_z_adapt_.emplace_back(1, Eigen::MatrixXd::Constant(1, 1, 0.25), config.warmup);
    }
  }

  Eigen::MatrixXd run() {
    const int total = config_.warmup + config_.draws;
    Eigen::MatrixXd out(config_.draws, static_cast<Eigen::Index>(layout_.size()));
    for (int it = 0; it < total; ++it) {
      sweep(it);
      if (it >= config_.warmup) out.row(it - config_.warmup) = layout_.flatten(state_).transpose();
    }
    return out;
  }

  double acceptance(const std::vector<RandomWalkAdapter>& adapters) const {
    long p = 0, a = 0;
    for (const auto& ad : adapters) {
      p += ad.proposals();
      a += ad.accepts();
    }
    return p == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(p);
  }
  const std::vector<RandomWalkAdapter>& theta_adapters() const { return theta_adapt_; }
  const std::vector<RandomWalkAdapter>& gamma_adapters() const { return gamma_adapt_; }
  const std::vector<RandomWalkAdapter>& omega_adapters() const { return omega_adapt_; }
  std::vector<RandomWalkAdapter> correlation_adapters() const {
    auto all = eta_x_adapt_;
    all.insert(all.end(), eta_z_adapt_.begin(), eta_z_adapt_.end());
    return all;
  }

 private:
  double segment_loglik(std::size_t j, const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                        double omega) const {
    if (config_.prior_only) return 0.0;
    Eigen::VectorXd eta = design_x_[j] * theta;
    if (gamma.size() > 0) eta += design_z_[j] * gamma;
    return detail::negbin_log_likelihood(y_[j], eta, omega);
  }

  Eigen::MatrixXd cov_x(std::size_t a, const Eigen::MatrixXd& corr) const {
    return scaled_covariance(corr, spec_.artists[a].scale_x);
  }
  Eigen::MatrixXd cov_z(std::size_t a, const Eigen::MatrixXd& corr) const {
    return scaled_covariance(corr, spec_.artists[a].scale_z);
  }

  void sweep(int it) {
    const auto J = spec_.segment_count();
    for (std::size_t j = 0; j < J; ++j) {
      const auto a = spec_.artist_of(j);
      const auto& prior = spec_.artists[a];
      {
        const Eigen::MatrixXd cov = cov_x(a, state_.corr_x[a]);
        const Eigen::VectorXd proposal = state_.theta[j] + theta_adapt_[j].step(rng_);
        const double ll_new = segment_loglik(j, proposal, state_.gamma[j], state_.omega[j]);
        const double log_ratio = ll_new + mvn_log_density(proposal, prior.mean_x, cov) - loglik_[j] -
                                 mvn_log_density(state_.theta[j], prior.mean_x, cov);
        const bool accepted = rng_.uniform() < accept_probability(log_ratio);
        if (accepted) {
          state_.theta[j] = proposal;
          loglik_[j] = ll_new;
        }
        theta_adapt_[j].record(accepted, it, state_.theta[j]);
      }
      if (spec_.ambient > 0) {
        const Eigen::MatrixXd cov = cov_z(a, state_.corr_z[a]);
        // Reflection at zero keeps the proposal symmetric on the positive orthant.
        const Eigen::VectorXd proposal = (state_.gamma[j] + gamma_adapt_[j].step(rng_)).cwiseAbs();
        const double ll_new = segment_loglik(j, state_.theta[j], proposal, state_.omega[j]);
        const double log_ratio = ll_new + mvn_log_density(proposal, prior.mean_z, cov) - loglik_[j] -
                                 mvn_log_density(state_.gamma[j], prior.mean_z, cov);
        const bool accepted = rng_.uniform() < accept_probability(log_ratio);
        if (accepted) {
          state_.gamma[j] = proposal;
          loglik_[j] = ll_new;
        }
        gamma_adapt_[j].record(accepted, it, state_.gamma[j]);
      }
      {
        const double log_w = std::log(state_.omega[j]);
        const double proposal_log = log_w + omega_adapt_[j].scalar_step(rng_);
        const double proposal = std::exp(proposal_log);
        const double ll_new = segment_loglik(j, state_.theta[j], state_.gamma[j], proposal);
        const double log_ratio =
            ll_new + detail::gamma_log_pdf(proposal, prior.dispersion_shape, prior.dispersion_rate) + proposal_log -
            loglik_[j] - detail::gamma_log_pdf(state_.omega[j], prior.dispersion_shape, prior.dispersion_rate) - log_w;
        const bool accepted = std::isfinite(proposal) && proposal > 0.0 && rng_.uniform() < accept_probability(log_ratio);
        if (accepted) {
          state_.omega[j] = proposal;
          loglik_[j] = ll_new;
        }
        omega_adapt_[j].record(accepted, it, Eigen::VectorXd::Constant(1, std::log(state_.omega[j])));
      }
    }
    for (std::size_t a = 0; a < spec_.artists.size(); ++a) {
      for (int m = 0; m < config_.correlation_moves; ++m) {
        correlation_move(a, it, /*exogenous=*/false);
        correlation_move(a, it, /*exogenous=*/true);
      }
    }
  }

  // Segment-level density of the artist's effects under a correlation matrix.
  double effects_density(std::size_t a, const Eigen::MatrixXd& corr, bool exogenous) const {
    const auto& prior = spec_.artists[a];
    const Eigen::MatrixXd cov = exogenous ? cov_z(a, corr) : cov_x(a, corr);
    const double log_mass = exogenous ? std::log(positive_orthant_probability(prior.mean_z, cov)) : 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < spec_.segment_count(); ++j) {
      if (spec_.artist_of(j) != a) continue;
      total += exogenous ? mvn_log_density(state_.gamma[j], prior.mean_z, cov) - log_mass
                         : mvn_log_density(state_.theta[j], prior.mean_x, cov);
    }
    return total;
  }

  // Joint move: eta' by a log random walk, then R' ~ LKJ(eta'). The LKJ
  // densities cancel against the proposal, leaving prior(eta), the log-walk
  // Jacobian and the segment effects' density.
  void correlation_move(std::size_t a, int it, bool exogenous) {
    auto& eta = exogenous ? state_.eta_z[a] : state_.eta_x[a];
    auto& corr = exogenous ? state_.corr_z[a] : state_.corr_x[a];
    auto& adapter = exogenous ? eta_z_adapt_[a] : eta_x_adapt_[a];
    const double dof = exogenous ? spec_.lkj_dof_z : spec_.lkj_dof_x;
    const int dim = static_cast<int>(exogenous ? spec_.ambient : spec_.theta_size());

    const double log_eta = std::log(eta);
    const double proposal_log = log_eta + adapter.scalar_step(rng_);
    const double proposal_eta = std::exp(proposal_log);
    bool accepted = false;
    if (std::isfinite(proposal_eta) && proposal_eta > 0.0) {
      const Eigen::MatrixXd proposal_corr = sample_lkj_any(dim, proposal_eta, rng_);
      const double log_ratio = detail::chi_squared_log_pdf(proposal_eta, dof) + proposal_log +
                               effects_density(a, proposal_corr, exogenous) -
                               detail::chi_squared_log_pdf(eta, dof) - log_eta -
                               effects_density(a, corr, exogenous);
      accepted = rng_.uniform() < accept_probability(log_ratio);
      if (accepted) {
        eta = proposal_eta;
        corr = proposal_corr;
      }
    }
    adapter.record(accepted, it * config_.correlation_moves, Eigen::VectorXd::Constant(1, std::log(eta)));
  }

  const NullModelSpec& spec_;
  const McmcConfig& config_;
  ParameterLayout layout_;
  NullParameters state_;
  Rng rng_;
  std::vector<Eigen::MatrixXd> design_x_;
  std::vector<Eigen::MatrixXd> design_z_;
  std::vector<Eigen::VectorXd> y_;
  std::vector<double> loglik_;
  std::vector<RandomWalkAdapter> theta_adapt_, gamma_adapt_, omega_adapt_, eta_x_adapt_, eta_z_adapt_;
};

struct StartingPoint {
  NullParameters params;
  std::vector<Eigen::MatrixXd> theta_cov;
  std::vector<Eigen::MatrixXd> gamma_cov;
};

/// Frequentist NegBin fits seed each segment; the prior means stand in when
/// a fit is impossible (constant covariates, too few nonzero weeks, ...).
StartingPoint default_start(const NullModelData& data, const NullModelSpec& spec, const McmcConfig& config,
                            const std::optional<NullParameters>& initial) {
  StartingPoint sp;
  const auto J = spec.segment_count();
  const auto C1 = static_cast<Eigen::Index>(spec.theta_size());
  const auto D = static_cast<Eigen::Index>(spec.ambient);
  NullParameters& p = sp.params;
  for (std::size_t j = 0; j < J; ++j) {
    const auto& prior = spec.artists[spec.artist_of(j)];
    Eigen::VectorXd theta = prior.mean_x;
    Eigen::VectorXd gamma = prior.mean_z.cwiseMax(0.0);
    double omega = prior.dispersion_shape / prior.dispersion_rate;
    Eigen::MatrixXd tcov = (0.1 * prior.scale_x).array().square().matrix().asDiagonal();
    Eigen::MatrixXd gcov = (0.1 * prior.scale_z).array().square().matrix().asDiagonal();
    if (config.prior_only) {
      tcov = prior.scale_x.array().square().matrix().asDiagonal();
      gcov = prior.scale_z.array().square().matrix().asDiagonal();
    } else {
      try {
        const auto fit = fit_count_regression(data.segments[j].curve, data.segments[j].covariates,
                                              CountFamily::NegBin);
        theta = fit.theta;
        gamma = fit.gamma.cwiseAbs();
        omega = std::clamp(fit.dispersion.value_or(omega), 0.1, 1e4);
        if (fit.covariance.allFinite()) {
          tcov = fit.covariance.topLeftCorner(C1, C1);
          gcov = fit.covariance.bottomRightCorner(D, D);
        }
      } catch (const std::exception&) {
      }
    }
    p.theta.push_back(theta);
    p.gamma.push_back(gamma);
    p.omega.push_back(omega);
    sp.theta_cov.push_back(tcov);
    sp.gamma_cov.push_back(gcov);
  }
  for (std::size_t a = 0; a < spec.artists.size(); ++a) {
    p.corr_x.push_back(Eigen::MatrixXd::Identity(C1, C1));
    p.corr_z.push_back(Eigen::MatrixXd::Identity(D, D));
    p.eta_x.push_back(spec.lkj_dof_x);
    p.eta_z.push_back(spec.lkj_dof_z);
  }
  if (initial) sp.params = *initial;
  return sp;
}

NullParameters jitter(NullParameters p, Rng& rng) {
  for (auto& t : p.theta) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) += 0.05 * rng.normal();
  }
  for (auto& g : p.gamma) {
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = std::abs(g(i) + 0.05 * rng.normal());
  }
  for (auto& w : p.omega) w *= std::exp(0.1 * rng.normal());
  return p;
}

}  // namespace

std::size_t NullModelSpec::segment_count() const {
  std::size_t n = 0;
  for (const auto& a : artists) n += a.segments;
  return n;
}

std::size_t NullModelSpec::artist_of(std::size_t segment) const {
  for (std::size_t a = 0; a < artists.size(); ++a) {
    if (segment < artists[a].segments) return a;
    segment -= artists[a].segments;
  }
  throw ConfigurationError("segment index beyond spec");
}

void NullModelSpec::validate() const {
  if (artists.empty()) throw ConfigurationError("null model needs at least one artist");
  if (!(lkj_dof_x > 0.0 && lkj_dof_z > 0.0)) throw ConfigurationError("chi-square dof must be positive");
  for (const auto& a : artists) {
    if (a.segments == 0) throw ConfigurationError("artist '" + a.artist_id + "' has no segments");
    if (static_cast<std::size_t>(a.mean_x.size()) != theta_size() ||
        static_cast<std::size_t>(a.scale_x.size()) != theta_size() ||
        static_cast<std::size_t>(a.mean_z.size()) != ambient ||
        static_cast<std::size_t>(a.scale_z.size()) != ambient) {
      throw ConfigurationError("artist '" + a.artist_id + "' prior dimensions do not match C and D");
    }
    if ((a.scale_x.size() > 0 && a.scale_x.minCoeff() <= 0.0) ||
        (a.scale_z.size() > 0 && a.scale_z.minCoeff() <= 0.0) || !(a.dispersion_shape > 0.0) ||
        !(a.dispersion_rate > 0.0)) {
      throw ConfigurationError("artist '" + a.artist_id + "' has a non-positive hyperparameter");
    }
  }
}

NullModelSpec NullModelSpec::defaults(std::size_t channels, std::size_t ambient,
                                      const std::vector<std::size_t>& segments_per_artist) {
  NullModelSpec spec;
  spec.channels = channels;
  spec.ambient = ambient;
  const auto C1 = static_cast<Eigen::Index>(channels + 1);
  const auto D = static_cast<Eigen::Index>(ambient);
  for (std::size_t a = 0; a < segments_per_artist.size(); ++a) {
    ArtistPrior prior;
    prior.artist_id = "artist-" + std::to_string(a);
    prior.segments = segments_per_artist[a];
    prior.mean_x = Eigen::VectorXd::Zero(C1);
    prior.mean_x(C1 - 1) = 3.0;
    prior.scale_x = Eigen::VectorXd::Ones(C1);
    prior.scale_x(C1 - 1) = 1.5;
    prior.mean_z = Eigen::VectorXd::Zero(D);
    prior.scale_z = Eigen::VectorXd::Ones(D);
    spec.artists.push_back(prior);
  }
  return spec;
}

ParameterLayout::ParameterLayout(const NullModelSpec& spec) : spec_(spec) {
  const auto J = spec.segment_count();
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t c = 0; c < spec.theta_size(); ++c) names_.push_back(indexed("theta", {j, c}));
    for (std::size_t d = 0; d < spec.ambient; ++d) names_.push_back(indexed("gamma", {j, d}));
    names_.push_back(indexed("omega", {j}));
  }
  for (std::size_t a = 0; a < spec.artists.size(); ++a) {
    names_.push_back(indexed("eta_x", {a}));
    names_.push_back(indexed("eta_z", {a}));
    for (std::size_t r = 0; r < spec.theta_size(); ++r)
      for (std::size_t c = r + 1; c < spec.theta_size(); ++c) names_.push_back(indexed("corr_x", {a, r, c}));
    for (std::size_t r = 0; r < spec.ambient; ++r)
      for (std::size_t c = r + 1; c < spec.ambient; ++c) names_.push_back(indexed("corr_z", {a, r, c}));
  }
  for (std::size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = i;
}

std::size_t ParameterLayout::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("unknown parameter '" + name + "'");
  return it->second;
}

Eigen::VectorXd ParameterLayout::flatten(const NullParameters& p) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(names_.size()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < spec_.segment_count(); ++j) {
    for (Eigen::Index c = 0; c < p.theta[j].size(); ++c) out(k++) = p.theta[j](c);
    for (Eigen::Index d = 0; d < p.gamma[j].size(); ++d) out(k++) = p.gamma[j](d);
    out(k++) = p.omega[j];
  }
  for (std::size_t a = 0; a < spec_.artists.size(); ++a) {
    out(k++) = p.eta_x[a];
    out(k++) = p.eta_z[a];
    const auto& cx = p.corr_x[a];
    for (Eigen::Index r = 0; r < cx.rows(); ++r)
      for (Eigen::Index c = r + 1; c < cx.cols(); ++c) out(k++) = cx(r, c);
    const auto& cz = p.corr_z[a];
    for (Eigen::Index r = 0; r < cz.rows(); ++r)
      for (Eigen::Index c = r + 1; c < cz.cols(); ++c) out(k++) = cz(r, c);
  }
  return out;
}

NullParameters ParameterLayout::unpack(const Eigen::Ref<const Eigen::VectorXd>& flat) const {
  NullParameters p;
  const auto C1 = static_cast<Eigen::Index>(spec_.theta_size());
  const auto D = static_cast<Eigen::Index>(spec_.ambient);
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < spec_.segment_count(); ++j) {
    p.theta.push_back(flat.segment(k, C1));
    k += C1;
    p.gamma.push_back(flat.segment(k, D));
    k += D;
    p.omega.push_back(flat(k++));
  }
  for (std::size_t a = 0; a < spec_.artists.size(); ++a) {
    p.eta_x.push_back(flat(k++));
    p.eta_z.push_back(flat(k++));
    Eigen::MatrixXd cx = Eigen::MatrixXd::Identity(C1, C1);
    for (Eigen::Index r = 0; r < C1; ++r)
      for (Eigen::Index c = r + 1; c < C1; ++c) cx(r, c) = cx(c, r) = flat(k++);
    Eigen::MatrixXd cz = Eigen::MatrixXd::Identity(D, D);
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index c = r + 1; c < D; ++c) cz(r, c) = cz(c, r) = flat(k++);
    p.corr_x.push_back(cx);
    p.corr_z.push_back(cz);
  }
  return p;
}

std::size_t PosteriorDraws::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw NotFoundError("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> PosteriorDraws::column(const std::string& name) const {
  const auto k = static_cast<Eigen::Index>(index_of(name));
  std::vector<double> out;
  out.reserve(total_draws());
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.rows(); ++i) out.push_back(c(i, k));
  return out;
}

double PosteriorDraws::mean(const std::string& name) const {
  const auto v = column(name);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double PosteriorDraws::sd(const std::string& name) const {
  const auto v = column(name);
  const double m = mean(name);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double PosteriorDraws::quantile(const std::string& name, double q) const {
  auto v = column(name);
  std::sort(v.begin(), v.end());
  return detail::sorted_quantile(v, q);
}

NullParameters PosteriorDraws::draw(std::size_t chain, std::size_t index) const {
  return ParameterLayout(spec).unpack(chains.at(chain).row(static_cast<Eigen::Index>(index)).transpose());
}

NullParameters PosteriorDraws::posterior_mean() const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()));
  for (const auto& c : chains) sum += c.colwise().sum().transpose();
  return ParameterLayout(spec).unpack(sum / static_cast<double>(total_draws()));
}

double PosteriorDraws::max_rhat() const {
  double m = 0.0;
  for (double r : rhat)
    if (std::isfinite(r)) m = std::max(m, r);
  return m;
}

NullParameters sample_prior(const NullModelSpec& spec, Rng& rng) {
  spec.validate();
  NullParameters p;
  std::vector<Eigen::MatrixXd> cov_x, cov_z;
  for (const auto& prior : spec.artists) {
    for (;;) {
      const double eta_x = rng.chi_squared(spec.lkj_dof_x);
      const double eta_z = rng.chi_squared(spec.lkj_dof_z);
      if (!(eta_x > 0.0 && eta_z > 0.0)) continue;
      Eigen::MatrixXd rx = sample_lkj_any(static_cast<int>(spec.theta_size()), eta_x, rng);
      Eigen::MatrixXd rz = sample_lkj_any(static_cast<int>(spec.ambient), eta_z, rng);
      Eigen::MatrixXd sx = scaled_covariance(rx, prior.scale_x);
      Eigen::MatrixXd sz = scaled_covariance(rz, prior.scale_z);
      if (sx.llt().info() != Eigen::Success || (sz.size() > 0 && sz.llt().info() != Eigen::Success)) continue;
      p.eta_x.push_back(eta_x);
      p.eta_z.push_back(eta_z);
      p.corr_x.push_back(rx);
      p.corr_z.push_back(rz);
      cov_x.push_back(sx);
      cov_z.push_back(sz);
      break;
    }
  }
  for (std::size_t j = 0; j < spec.segment_count(); ++j) {
    const auto a = spec.artist_of(j);
    const auto& prior = spec.artists[a];
    const Eigen::MatrixXd lower = cov_x[a].llt().matrixL();
    Eigen::VectorXd u(lower.rows());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
    p.theta.push_back(prior.mean_x + lower * u);
    p.gamma.push_back(sample_truncated_normal(prior.mean_z, cov_z[a], rng));
    p.omega.push_back(rng.gamma(prior.dispersion_shape, prior.dispersion_rate));
  }
  return p;
}

NullModelData simulate_null_data(const NullModelSpec& spec, const NullParameters& params,
                                 std::span<const CovariatePath> covariates, Rng& rng) {
  const auto J = spec.segment_count();
  if (covariates.size() != J && covariates.size() != 1) {
    throw ConfigurationError("need one covariate path per segment or one shared path");
  }
  NullModelData data;
  for (std::size_t j = 0; j < J; ++j) {
    const auto& cov = covariates[covariates.size() == 1 ? 0 : j];
    SegmentSeries s;
    s.covariates = cov;
    s.curve.stratum = static_cast<int>(j);
    for (std::size_t t = 0; t < cov.horizon(); ++t) {
      const double eta = params.theta[j].head(static_cast<Eigen::Index>(spec.channels)).dot(cov.x(t)) +
                         params.theta[j](static_cast<Eigen::Index>(spec.channels)) + params.gamma[j].dot(cov.z(t));
      s.curve.values.push_back(rng.negative_binomial(std::exp(std::clamp(eta, -50.0, 50.0)), params.omega[j]));
    }
    data.segments.push_back(std::move(s));
  }
  return data;
}

PosteriorDraws fit_null_model(const NullModelData& data, const NullModelSpec& spec,
                              const McmcConfig& config, const std::optional<NullParameters>& initial) {
  if (config.prior_only) {
    spec.validate();
  } else {
    check_data(data, spec);
  }
  if (config.chains < 1 || config.draws < 1 || config.warmup < 0) {
    throw ConfigurationError("MCMC needs at least one chain and one draw");
  }
  const StartingPoint start = default_start(data, spec, config, initial);
  const Rng root(config.seed);
  const auto n_chains = static_cast<std::size_t>(config.chains);
  std::vector<Eigen::MatrixXd> results(n_chains);
  std::vector<std::map<std::string, double>> rates(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);

  auto run_chain = [&](std::size_t c) {
    try {
      Rng rng = root.split(c);
      NullChain chain(data, spec, config, jitter(start.params, rng), start.theta_cov, start.gamma_cov,
                      rng.split(1));
      results[c] = chain.run();
      rates[c]["theta"] = chain.acceptance(chain.theta_adapters());
      rates[c]["gamma"] = chain.acceptance(chain.gamma_adapters());
      rates[c]["omega"] = chain.acceptance(chain.omega_adapters());
      rates[c]["correlation"] = chain.acceptance(chain.correlation_adapters());
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel && n_chains > 1) {
    std::vector<std::thread> workers;
    for (std::size_t c = 0; c < n_chains; ++c) workers.emplace_back(run_chain, c);
    for (auto& w : workers) w.join();
  } else {
    for (std::size_t c = 0; c < n_chains; ++c) run_chain(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorDraws out;
  out.spec = spec;
  out.config = config;
  out.names = ParameterLayout(spec).names();
  out.chains = std::move(results);
  for (const auto& kind : {"theta", "gamma", "omega", "correlation"}) {
    double s = 0.0;
    for (const auto& r : rates) s += r.at(kind);
    out.acceptance[kind] = s / static_cast<double>(n_chains);
  }
  std::vector<std::string> poor;
  for (std::size_t k = 0; k < out.names.size(); ++k) {
    std::vector<std::vector<double>> per_chain;
    for (const auto& c : out.chains) {
      std::vector<double> v(static_cast<std::size_t>(c.rows()));
      for (Eigen::Index i = 0; i < c.rows(); ++i) v[static_cast<std::size_t>(i)] = c(i, static_cast<Eigen::Index>(k));
      per_chain.push_back(std::move(v));
    }
    out.rhat.push_back(split_rhat(per_chain));
    out.ess.push_back(effective_sample_size(per_chain));
    if (out.rhat.back() > 1.1) poor.push_back(out.names[k]);
  }
  if (!poor.empty()) {
    std::string msg = "R-hat above 1.1 for:";
    for (const auto& n : poor) msg += " " + n;
    out.warnings.push_back(msg);
  }
  out.lineage = std::make_shared<FitLineage>(FitLineage{data, start.params, nullptr});
  return out;
}

PredictiveQuantiles posterior_predictive(const PosteriorDraws& draws,
                                         std::span<const CovariatePath> proposed,
                                         std::span<const double> levels, Rng& rng,
                                         std::size_t max_draws) {
  const auto& spec = draws.spec;
  const auto J = spec.segment_count();
  if (proposed.size() != J && proposed.size() != 1) {
    throw ConfigurationError("need one proposed path per segment or one shared path");
  }
  for (double q : levels)
    if (!(q > 0.0 && q < 1.0)) throw DomainError("quantile levels must lie in (0, 1)");
  const auto T = proposed.front().horizon();
  for (const auto& p : proposed) {
    if (p.horizon() != T || p.channels() != spec.channels || p.ambient() != spec.ambient) {
      throw ConfigurationError("proposed covariates do not match the fitted model");
    }
  }
  const auto total = draws.total_draws();
  const auto used = std::min(max_draws, total);
  const ParameterLayout layout(spec);
  std::vector<std::vector<std::vector<double>>> sims(J, std::vector<std::vector<double>>(T));
  std::vector<std::vector<double>> agg(T);
  for (std::size_t k = 0; k < used; ++k) {
    const auto flat_index = k * total / used;
    const auto chain = flat_index / draws.draws_per_chain();
    const auto row = flat_index % draws.draws_per_chain();
    const auto p = layout.unpack(draws.chains[chain].row(static_cast<Eigen::Index>(row)).transpose());
    std::vector<double> week_total(T, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      const auto& cov = proposed[proposed.size() == 1 ? 0 : j];
      for (std::size_t t = 0; t < T; ++t) {
        const double eta = p.theta[j].head(static_cast<Eigen::Index>(spec.channels)).dot(cov.x(t)) +
                           p.theta[j](static_cast<Eigen::Index>(spec.channels)) + p.gamma[j].dot(cov.z(t));
        const auto y = static_cast<double>(rng.negative_binomial(std::exp(std::clamp(eta, -50.0, 50.0)), p.omega[j]));
        sims[j][t].push_back(y);
        week_total[t] += y;
      }
    }
    for (std::size_t t = 0; t < T; ++t) agg[t].push_back(week_total[t]);
  }

  PredictiveQuantiles out;
  out.levels.assign(levels.begin(), levels.end());
  auto summarize = [&](std::vector<std::vector<double>>& per_week) {
    std::vector<std::vector<double>> curves(levels.size(), std::vector<double>(T));
    for (std::size_t t = 0; t < T; ++t) {
      std::sort(per_week[t].begin(), per_week[t].end());
      for (std::size_t l = 0; l < levels.size(); ++l) curves[l][t] = detail::sorted_quantile(per_week[t], levels[l]);
    }
    return curves;
  };
  for (std::size_t j = 0; j < J; ++j) out.segments.push_back(summarize(sims[j]));
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    for (double v : agg[t]) s += v;
    out.aggregate_mean.push_back(s / static_cast<double>(used));
  }
  out.aggregate = summarize(agg);
  return out;
}

PosteriorDraws update_with_new_week(const PosteriorDraws& draws, const WeekObservation& week) {
  if (!draws.lineage) throw ConfigurationError("draws carry no data lineage");
  const auto& spec = draws.spec;
  NullModelData data = draws.lineage->data;
  const auto T = data.horizon();
  if (week.week != T) {
    throw DomainError("horizon mismatch: expected week " + std::to_string(T) + ", got " +
                      std::to_string(week.week));
  }
  const auto J = spec.segment_count();
  if (week.counts.size() != J || week.x.size() != J || week.z.size() != J) {
    throw ConfigurationError("new week must carry counts and covariates for every segment");
  }
  for (std::size_t j = 0; j < J; ++j) {
    auto& s = data.segments[j];
    if (week.counts[j] < 0) throw ValidationError("negative count in new week");
    s.curve.values.push_back(week.counts[j]);
    Eigen::MatrixXd x(T + 1, s.covariates.channels());
    Eigen::MatrixXd z(T + 1, s.covariates.ambient());
    x.topRows(T) = s.covariates.endogenous;
    z.topRows(T) = s.covariates.exogenous;
    x.row(T) = week.x[j].transpose();
    z.row(T) = week.z[j].transpose();
    s.covariates = CovariatePath(std::move(x), std::move(z));
  }
  const NullParameters warm = draws.posterior_mean();
  PosteriorDraws out = fit_null_model(data, spec, draws.config, warm);
  out.lineage = std::make_shared<FitLineage>(FitLineage{std::move(data), warm, draws.lineage});
  return out;
}

PosteriorDraws remove_last_week(const PosteriorDraws& draws) {
  if (!draws.lineage || !draws.lineage->parent) throw DomainError("no earlier fit to return to");
  const auto parent = draws.lineage->parent;
  PosteriorDraws out = fit_null_model(parent->data, draws.spec, draws.config, parent->initial);
  out.lineage = parent;
  return out;
}

}  // namespace tunedemand
