#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/bayes.hpp"
#include "tunedemand/envelope.hpp"

namespace tunedemand {

/// Forced hierarchy per segment j:
///   y_t ~ NegBin(envelope_j(t) * exp(theta_{j,r}.x_t + gamma_{j,r}.z_t), omega_j), r = phase of t
///   log node ~ Normal(node_log_mean, node_log_sd), effects ~ Normal(0, effect_scale),
///   omega ~ Gamma(shape, rate); change points shared, fixed or restricted uniform.
struct ForcedModelSpec {
  /// Centre of the log node prior; unset means log of the segment's peak count.
  std::optional<double> node_log_mean;
  double node_log_sd = 1.5;
  double effect_scale = 1.0;
  double dispersion_shape = 2.0;
  double dispersion_rate = 0.5;
  /// Fixed change points. Required unless `sample_taus`.
  std::optional<ChangePoints> taus;
  bool sample_taus = false;
  /// Half-width of the local change-point move.
  int tau_step = 2;
};

struct ForcedSeries {
  DemandCurve curve;
  CovariatePath covariates;
};

/// Columns: node[j,k] (k = 0 attack, 1 sustain, 2 decay), theta[j,r,c],
/// gamma[j,r,d], omega[j], then tau_A tau_S tau_D tau_R.
struct ForcedPosterior {
  ForcedModelSpec spec;
  McmcConfig config;
  std::size_t horizon = 0;
  std::size_t segments = 0;
  std::size_t channels = 0;
  std::size_t ambient = 0;
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<std::string> warnings;
  std::map<std::string, double> acceptance;

  std::size_t index_of(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
  double mean(const std::string& name) const;
  double quantile(const std::string& name, double q) const;
  /// Most frequent change-point tuple over all draws.
  ChangePoints tau_mode() const;
  /// Draw frequency of each change-point tuple.
  std::map<std::array<std::size_t, 4>, double> tau_frequencies() const;
  /// Posterior-mean nodes and effects of one segment at the modal change points.
  EnvelopeFit mean_fit(std::size_t segment) const;
};

ForcedPosterior fit_forced_model_bayes(const std::vector<ForcedSeries>& data, const ForcedModelSpec& spec,
                                       const McmcConfig& config);

}  // namespace tunedemand
