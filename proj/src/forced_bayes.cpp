#include "tunedemand/forced_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "mcmc_internal.hpp"
#include "tunedemand/diagnostics.hpp"
#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

using detail::accept_probability;
using detail::RandomWalkAdapter;

constexpr double kMeanFloor = 1e-3;

struct SegmentState {
  Eigen::Vector3d log_nodes;
  std::array<Eigen::VectorXd, 4> effects;  // [theta; gamma] per phase
  double omega = 1.0;
};

struct State {
  std::vector<SegmentState> segments;
  ChangePoints taus;
};

double normal_log_pdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return -0.5 * u * u - std::log(sd);
}

class ForcedChain {
 public:
  ForcedChain(const std::vector<ForcedSeries>& data, const ForcedModelSpec& spec, const McmcConfig& config,
              std::vector<double> node_centres, State start, Rng rng)
      : data_(data), spec_(spec), config_(config), centres_(std::move(node_centres)), state_(std::move(start)),
        rng_(std::move(rng)) {
    T_ = data.front().curve.horizon();
    C_ = static_cast<Eigen::Index>(data.front().covariates.channels());
    D_ = static_cast<Eigen::Index>(data.front().covariates.ambient());
    for (std::size_t j = 0; j < data.size(); ++j) {
      node_adapt_.emplace_back(3, 0.01 * Eigen::MatrixXd::Identity(3, 3), config.warmup);
      std::array<RandomWalkAdapter, 4> eff;
      if (C_ + D_ > 0) {
        for (auto& e : eff) e = RandomWalkAdapter(static_cast<int>(C_ + D_), 0.01 * Eigen::MatrixXd::Identity(C_ + D_, C_ + D_), config.warmup);
      }
      effect_adapt_.push_back(eff);
      omega_adapt_.emplace_back(1, Eigen::MatrixXd::Constant(1, 1, 0.1), config.warmup);
      loglik_.push_back(segment_loglik(j, state_.segments[j], state_.taus));
    }
  }

  Eigen::MatrixXd run(std::size_t width) {
    Eigen::MatrixXd out(config_.draws, static_cast<Eigen::Index>(width));
    const int total = config_.warmup + config_.draws;
    for (int it = 0; it < total; ++it) {
      sweep(it);
      if (it >= config_.warmup) out.row(it - config_.warmup) = flatten().transpose();
    }
    return out;
  }

  std::map<std::string, double> acceptance() const {
    auto rate = [](long a, long p) { return p == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(p); };
    long na = 0, np = 0, ea = 0, ep = 0, wa = 0, wp = 0;
    for (const auto& a : node_adapt_) na += a.accepts(), np += a.proposals();
    for (const auto& arr : effect_adapt_)
      for (const auto& a : arr) ea += a.accepts(), ep += a.proposals();
    for (const auto& a : omega_adapt_) wa += a.accepts(), wp += a.proposals();
    std::map<std::string, double> out{{"nodes", rate(na, np)}, {"effects", rate(ea, ep)}, {"omega", rate(wa, wp)}};
    if (spec_.sample_taus) out["taus"] = rate(tau_accepts_, tau_proposals_);
    return out;
  }

 private:
  double segment_loglik(std::size_t j, const SegmentState& s, const ChangePoints& taus) const {
    if (config_.prior_only) return 0.0;
    const auto& series = data_[j];
    const auto env = envelope_curve(taus, {std::exp(s.log_nodes(0)), std::exp(s.log_nodes(1)), std::exp(s.log_nodes(2))}, T_);
    double ll = 0.0;
    for (std::size_t t = 0; t < T_; ++t) {
      double mean = env[t];
      if (C_ + D_ > 0) {
        const auto& b = s.effects[static_cast<int>(phase_of(t, taus))];
        double lin = 0.0;
        if (C_ > 0) lin += b.head(C_).dot(series.covariates.x(t));
        if (D_ > 0) lin += b.tail(D_).dot(series.covariates.z(t));
        mean *= std::exp(std::clamp(lin, -50.0, 50.0));
      }
      ll += negbin_log_pmf(series.curve.values[t], std::max(mean, kMeanFloor), s.omega);
    }
    return ll;
  }

  double node_prior(std::size_t j, const Eigen::Vector3d& log_nodes) const {
    double lp = 0.0;
    // Lognormal density in node space; the log-walk Jacobian cancels its 1/mu.
    for (int k = 0; k < 3; ++k) lp += normal_log_pdf(log_nodes(k), centres_[j], spec_.node_log_sd);
    return lp;
  }

  double effect_prior(const Eigen::VectorXd& b) const {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) lp += normal_log_pdf(b(i), 0.0, spec_.effect_scale);
    return lp;
  }

  void sweep(int it) {
    for (std::size_t j = 0; j < data_.size(); ++j) {
      auto& s = state_.segments[j];
      {
        SegmentState prop = s;
        prop.log_nodes += node_adapt_[j].step(rng_);
        const double ll = segment_loglik(j, prop, state_.taus);
        const double lr = ll + node_prior(j, prop.log_nodes) - loglik_[j] - node_prior(j, s.log_nodes);
        const bool ok = rng_.uniform() < accept_probability(lr);
        if (ok) {
          s = prop;
          loglik_[j] = ll;
        }
        node_adapt_[j].record(ok, it, s.log_nodes);
      }
      if (C_ + D_ > 0) {
        for (int r = 0; r < 4; ++r) {
          SegmentState prop = s;
          prop.effects[r] += effect_adapt_[j][r].step(rng_);
          const double ll = segment_loglik(j, prop, state_.taus);
          const double lr = ll + effect_prior(prop.effects[r]) - loglik_[j] - effect_prior(s.effects[r]);
          const bool ok = rng_.uniform() < accept_probability(lr);
          if (ok) {
            s = prop;
            loglik_[j] = ll;
          }
          effect_adapt_[j][r].record(ok, it, s.effects[r]);
        }
      }
      {
        SegmentState prop = s;
        const double step = omega_adapt_[j].scalar_step(rng_);
        prop.omega = s.omega * std::exp(step);
        const double ll = segment_loglik(j, prop, state_.taus);
        const double lr = ll + detail::gamma_log_pdf(prop.omega, spec_.dispersion_shape, spec_.dispersion_rate) +
                          std::log(prop.omega) - loglik_[j] -
                          detail::gamma_log_pdf(s.omega, spec_.dispersion_shape, spec_.dispersion_rate) -
                          std::log(s.omega);
        const bool ok = prop.omega > 0.0 && std::isfinite(prop.omega) && rng_.uniform() < accept_probability(lr);
        if (ok) {
          s = prop;
          loglik_[j] = ll;
        }
        omega_adapt_[j].record(ok, it, Eigen::VectorXd::Constant(1, std::log(s.omega)));
      }
    }
    if (spec_.sample_taus) {
      tau_move(/*independent=*/false, it);
      tau_move(/*independent=*/true, it);
    }
  }

  // Local moves shift one change point by up to tau_step weeks; independent
  // moves propose from the prior, which then cancels from the ratio.
  void tau_move(bool independent, int it) {
    ChangePoints prop = state_.taus;
    if (independent) {
      prop = sample_changepoint_prior(T_, rng_);
    } else {
      auto k = prop.as_array();
      const auto which = static_cast<std::size_t>(rng_.uniform_int(0, 3));
      auto delta = rng_.uniform_int(1, spec_.tau_step);
      if (rng_.uniform() < 0.5) delta = -delta;
      const auto moved = static_cast<std::int64_t>(k[which]) + delta;
      if (moved < 0) {
        count_tau(false, it);
        return;
      }
      k[which] = static_cast<std::size_t>(moved);
      prop = {k[0], k[1], k[2], k[3]};
    }
    const double prior_new = changepoint_prior_logpmf(prop, T_);
    if (!std::isfinite(prior_new)) {
      count_tau(false, it);
      return;
    }
    std::vector<double> ll(data_.size());
    double lr = 0.0;
    for (std::size_t j = 0; j < data_.size(); ++j) {
      ll[j] = segment_loglik(j, state_.segments[j], prop);
      lr += ll[j] - loglik_[j];
    }
    if (!independent) lr += prior_new - changepoint_prior_logpmf(state_.taus, T_);
    const bool ok = rng_.uniform() < accept_probability(lr);
    if (ok) {
      state_.taus = prop;
      loglik_ = ll;
    }
    count_tau(ok, it);
  }

  void count_tau(bool accepted, int it) {
    if (it < config_.warmup) return;
    ++tau_proposals_;
    if (accepted) ++tau_accepts_;
  }

  Eigen::VectorXd flatten() const {
    std::vector<double> v;
    for (const auto& s : state_.segments) {
      for (int k = 0; k < 3; ++k) v.push_back(std::exp(s.log_nodes(k)));
    }
    for (const auto& s : state_.segments)
      for (int r = 0; r < 4; ++r)
        for (Eigen::Index i = 0; i < s.effects[r].size(); ++i) v.push_back(s.effects[r](i));
    for (const auto& s : state_.segments) v.push_back(s.omega);
    for (auto t : state_.taus.as_array()) v.push_back(static_cast<double>(t));
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const std::vector<ForcedSeries>& data_;
  const ForcedModelSpec& spec_;
  const McmcConfig& config_;
  std::vector<double> centres_;
  State state_;
  Rng rng_;
  std::size_t T_ = 0;
  Eigen::Index C_ = 0, D_ = 0;
  std::vector<RandomWalkAdapter> node_adapt_;
  std::vector<std::array<RandomWalkAdapter, 4>> effect_adapt_;
  std::vector<RandomWalkAdapter> omega_adapt_;
  std::vector<double> loglik_;
  long tau_proposals_ = 0, tau_accepts_ = 0;
};

std::vector<std::string> forced_names(std::size_t J, std::size_t C, std::size_t D) {
  std::vector<std::string> names;
  auto name = [](const std::string& base, std::initializer_list<std::size_t> idx) {
    std::ostringstream os;
    os << base << '[';
    bool first = true;
    for (auto i : idx) os << (first ? "" : ",") << i, first = false;
    os << ']';
    return os.str();
  };
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t k = 0; k < 3; ++k) names.push_back(name("node", {j, k}));
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < C; ++c) names.push_back(name("theta", {j, r, c}));
      for (std::size_t d = 0; d < D; ++d) names.push_back(name("gamma", {j, r, d}));
    }
  for (std::size_t j = 0; j < J; ++j) names.push_back(name("omega", {j}));
  for (const char* t : {"tau_A", "tau_S", "tau_D", "tau_R"}) names.emplace_back(t);
  return names;
}

}  // namespace

std::size_t ForcedPosterior::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw NotFoundError("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<double> ForcedPosterior::column(const std::string& name) const {
  const auto k = static_cast<Eigen::Index>(index_of(name));
  std::vector<double> out;
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.rows(); ++i) out.push_back(c(i, k));
  return out;
}

double ForcedPosterior::mean(const std::string& name) const {
  const auto v = column(name);
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double ForcedPosterior::quantile(const std::string& name, double q) const {
  auto v = column(name);
  std::sort(v.begin(), v.end());
  return detail::sorted_quantile(v, q);
}

std::map<std::array<std::size_t, 4>, double> ForcedPosterior::tau_frequencies() const {
  const auto first = static_cast<Eigen::Index>(index_of("tau_A"));
  std::map<std::array<std::size_t, 4>, double> counts;
  double n = 0.0;
  for (const auto& c : chains) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      std::array<std::size_t, 4> k{};
      for (int m = 0; m < 4; ++m) k[m] = static_cast<std::size_t>(std::llround(c(i, first + m)));
      counts[k] += 1.0;
      n += 1.0;
    }
  }
  for (auto& [k, v] : counts) v /= n;
  return counts;
}

ChangePoints ForcedPosterior::tau_mode() const {
  const auto freq = tau_frequencies();
  auto best = std::max_element(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  const auto& k = best->first;
  return {k[0], k[1], k[2], k[3]};
}

EnvelopeFit ForcedPosterior::mean_fit(std::size_t segment) const {
  if (segment >= segments) throw NotFoundError("segment out of range");
  auto name = [&](const char* base, std::size_t a, std::size_t b) {
    return std::string(base) + "[" + std::to_string(segment) + "," + std::to_string(a) + "," + std::to_string(b) + "]";
  };
  EnvelopeFit fit;
  fit.taus = tau_mode();
  fit.horizon = horizon;
  for (std::size_t k = 0; k < 3; ++k) {
    fit.nodes[k] = mean("node[" + std::to_string(segment) + "," + std::to_string(k) + "]");
  }
  for (std::size_t r = 0; r < 4; ++r) {
    fit.effects[r].theta.resize(static_cast<Eigen::Index>(channels));
    fit.effects[r].gamma.resize(static_cast<Eigen::Index>(ambient));
    for (std::size_t c = 0; c < channels; ++c) fit.effects[r].theta(static_cast<Eigen::Index>(c)) = mean(name("theta", r, c));
    for (std::size_t d = 0; d < ambient; ++d) fit.effects[r].gamma(static_cast<Eigen::Index>(d)) = mean(name("gamma", r, d));
  }
  fit.dispersion = mean("omega[" + std::to_string(segment) + "]");
  fit.refresh_lines();
  return fit;
}

ForcedPosterior fit_forced_model_bayes(const std::vector<ForcedSeries>& data, const ForcedModelSpec& spec,
                                       const McmcConfig& config) {
  if (data.empty()) throw ConfigurationError("forced model needs at least one series");
  if (config.chains < 1 || config.draws < 1 || config.warmup < 0) {
    throw ConfigurationError("MCMC needs at least one chain and one draw");
  }
  if (!(spec.node_log_sd > 0.0 && spec.effect_scale > 0.0 && spec.dispersion_shape > 0.0 &&
        spec.dispersion_rate > 0.0 && spec.tau_step >= 1)) {
    throw ConfigurationError("forced model hyperparameters must be positive");
  }
  const auto T = data.front().curve.horizon();
  if (T < 8) throw ConfigurationError("forced model needs at least 8 weeks");
  const auto C = data.front().covariates.channels();
  const auto D = data.front().covariates.ambient();
  bool any_positive = false;
  for (const auto& s : data) {
    s.curve.validate();
    if (s.curve.horizon() != T || s.covariates.horizon() != T || s.covariates.channels() != C ||
        s.covariates.ambient() != D) {
      throw ConfigurationError("forced model series differ in shape");
    }
    for (auto v : s.curve.values) any_positive = any_positive || v > 0;
  }
  if (!config.prior_only && !any_positive) throw FitError("forced model: every series is all zeros");

  ChangePoints start_taus;
  if (spec.taus) {
    spec.taus->validate(T);
    start_taus = *spec.taus;
  } else if (!spec.sample_taus) {
    throw ConfigurationError("fixed change points missing: give taus or enable tau sampling");
  } else {
    DemandCurve total = data.front().curve;
    for (std::size_t j = 1; j < data.size(); ++j)
      for (std::size_t t = 0; t < T; ++t) total.values[t] += data[j].curve.values[t];
    try {
      start_taus = fit_changepoints(total);
    } catch (const FitError&) {
      Rng init(config.seed);
      start_taus = sample_changepoint_prior(T, init);
    }
  }
  if (spec.sample_taus && !std::isfinite(changepoint_prior_logpmf(start_taus, T))) {
    throw ConfigurationError("starting change points lie outside the prior support");
  }

  std::vector<double> centres;
  State start;
  start.taus = start_taus;
  for (const auto& s : data) {
    const auto peak = *std::max_element(s.curve.values.begin(), s.curve.values.end());
    const double centre = spec.node_log_mean.value_or(std::log(std::max<double>(1.0, static_cast<double>(peak))));
    centres.push_back(centre);
    SegmentState seg;
    seg.log_nodes = Eigen::Vector3d::Constant(centre);
    seg.omega = spec.dispersion_shape / spec.dispersion_rate;
    for (auto& e : seg.effects) e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(C + D));
    if (!config.prior_only) {
      try {
        const auto fit = fit_partite(s.curve, start_taus, s.covariates);
        for (int k = 0; k < 3; ++k) seg.log_nodes(k) = std::log(std::max(fit.nodes[k], 1e-2));
        for (int r = 0; r < 4; ++r) seg.effects[r] << fit.effects[r].theta, fit.effects[r].gamma;
        seg.omega = std::clamp(fit.dispersion.value_or(seg.omega), 0.1, 1e4);
      } catch (const std::exception&) {
      }
    }
    start.segments.push_back(seg);
  }

  const auto names = forced_names(data.size(), C, D);
  const Rng root(config.seed);
  const auto n_chains = static_cast<std::size_t>(config.chains);
  std::vector<Eigen::MatrixXd> results(n_chains);
  std::vector<std::map<std::string, double>> rates(n_chains);
  std::vector<std::exception_ptr> errors(n_chains);
  auto run_chain = [&](std::size_t c) {
    try {
      Rng rng = root.split(c);
      State s = start;
      for (auto& seg : s.segments) {
        for (int k = 0; k < 3; ++k) seg.log_nodes(k) += 0.05 * rng.normal();
        seg.omega *= std::exp(0.1 * rng.normal());
      }
      ForcedChain chain(data, spec, config, centres, std::move(s), rng.split(1));
      results[c] = chain.run(names.size());
      rates[c] = chain.acceptance();
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

  ForcedPosterior out;
  out.spec = spec;
  out.config = config;
  out.horizon = T;
  out.segments = data.size();
  out.channels = C;
  out.ambient = D;
  out.names = names;
  out.chains = std::move(results);
  for (const auto& [kind, _] : rates.front()) {
    double s = 0.0;
    for (const auto& r : rates) s += r.at(kind);
    out.acceptance[kind] = s / static_cast<double>(n_chains);
  }
  std::vector<std::string> poor;
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<std::vector<double>> per_chain;
    for (const auto& c : out.chains) {
      std::vector<double> v(static_cast<std::size_t>(c.rows()));
      for (Eigen::Index i = 0; i < c.rows(); ++i) v[static_cast<std::size_t>(i)] = c(i, static_cast<Eigen::Index>(k));
      per_chain.push_back(std::move(v));
    }
    out.rhat.push_back(split_rhat(per_chain));
    out.ess.push_back(effective_sample_size(per_chain));
    if (out.rhat.back() > 1.1) poor.push_back(names[k]);
  }
  if (!poor.empty()) {
    std::string msg = "R-hat above 1.1 for:";
    for (const auto& n : poor) msg += " " + n;
    out.warnings.push_back(msg);
  }
  return out;
}

}  // namespace tunedemand
