#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/core_model.hpp"
#include "tunedemand/rng.hpp"

namespace tunedemand {

/// Artist-level constants of the null hierarchy. Vectors over the channel
/// effects have C + 1 entries, the intercept pseudo-channel last.
struct ArtistPrior {
  std::string artist_id;
  std::size_t segments = 1;
  Eigen::VectorXd mean_x;
  Eigen::VectorXd scale_x;
  Eigen::VectorXd mean_z;
  Eigen::VectorXd scale_z;
  double dispersion_shape = 2.0;  // Gamma shape
  double dispersion_rate = 0.5;   // Gamma rate
};

/// Segment-within-artist hierarchy:
///   y ~ NegBin(exp(theta.[x, 1] + gamma.z), omega)
///   theta ~ Normal(mean_x, S_x R_x S_x), gamma ~ Normal(mean_z, S_z R_z S_z) on gamma >= 0
///   R ~ LKJ(eta), eta ~ chi^2(dof), omega ~ Gamma(shape, rate)
/// Segments are numbered artist by artist.
struct NullModelSpec {
  std::size_t channels = 1;
  std::size_t ambient = 1;
  std::vector<ArtistPrior> artists;
  double lkj_dof_x = 4.0;
  double lkj_dof_z = 4.0;

  std::size_t theta_size() const noexcept { return channels + 1; }
  std::size_t segment_count() const;
  std::size_t artist_of(std::size_t segment) const;
  void validate() const;

  static NullModelSpec defaults(std::size_t channels, std::size_t ambient,
                                const std::vector<std::size_t>& segments_per_artist);
};

struct NullParameters {
  std::vector<Eigen::VectorXd> theta;  // per segment, length C + 1
  std::vector<Eigen::VectorXd> gamma;  // per segment, length D
  std::vector<double> omega;           // per segment
  std::vector<Eigen::MatrixXd> corr_x;  // per artist
  std::vector<Eigen::MatrixXd> corr_z;
  std::vector<double> eta_x;
  std::vector<double> eta_z;
};

struct SegmentSeries {
  DemandCurve curve;
  CovariatePath covariates;
};

struct NullModelData {
  std::vector<SegmentSeries> segments;
  std::size_t horizon() const { return segments.empty() ? 0 : segments.front().curve.horizon(); }
};

struct McmcConfig {
  int chains = 4;
  int warmup = 2000;
  int draws = 2000;
  std::uint64_t seed = 1;
  /// Drop the likelihood: the sampler then targets the prior.
  bool prior_only = false;
  /// Correlation-block moves per sweep.
  int correlation_moves = 3;
  bool parallel = true;
};

/// Flat naming of every scalar in NullParameters:
/// theta[j,c] gamma[j,d] omega[j] eta_x[a] eta_z[a] corr_x[a,r,c] corr_z[a,r,c] (r < c).
class ParameterLayout {
 public:
  explicit ParameterLayout(const NullModelSpec& spec);

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }
  std::size_t index_of(const std::string& name) const;
  Eigen::VectorXd flatten(const NullParameters& p) const;
  NullParameters unpack(const Eigen::Ref<const Eigen::VectorXd>& flat) const;

 private:
  NullModelSpec spec_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

struct FitLineage {
  NullModelData data;
  NullParameters initial;
  std::shared_ptr<const FitLineage> parent;
};

struct PosteriorDraws {
  NullModelSpec spec;
  McmcConfig config;
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;  // draws x parameters, one per chain
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<std::string> warnings;
  /// Sampling-phase acceptance rate per block kind: theta, gamma, omega, correlation.
  std::map<std::string, double> acceptance;
  std::shared_ptr<const FitLineage> lineage;

  std::size_t draws_per_chain() const { return chains.empty() ? 0 : static_cast<std::size_t>(chains.front().rows()); }
  std::size_t total_draws() const { return chains.size() * draws_per_chain(); }
  std::size_t index_of(const std::string& name) const;
  /// All chains concatenated.
  std::vector<double> column(const std::string& name) const;
  double mean(const std::string& name) const;
  double sd(const std::string& name) const;
  double quantile(const std::string& name, double q) const;
  NullParameters draw(std::size_t chain, std::size_t index) const;
  NullParameters posterior_mean() const;
  double max_rhat() const;
};

/// One draw from the full prior stack.
NullParameters sample_prior(const NullModelSpec& spec, Rng& rng);

/// Counts for every segment given parameters and per-segment covariates.
NullModelData simulate_null_data(const NullModelSpec& spec, const NullParameters& params,
                                 std::span<const CovariatePath> covariates, Rng& rng);

/// Adaptive random-walk Metropolis-within-Gibbs. Blocks per sweep: theta per
/// segment (adapted multivariate proposal), gamma per segment (reflected at
/// zero), log omega per segment, and per artist a joint move of eta with a
/// fresh LKJ(eta) correlation matrix. Adaptation stops after warmup.
PosteriorDraws fit_null_model(const NullModelData& data, const NullModelSpec& spec,
                              const McmcConfig& config,
                              const std::optional<NullParameters>& initial = std::nullopt);

struct PredictiveQuantiles {
  std::vector<double> levels;
  std::vector<std::vector<std::vector<double>>> segments;  // [segment][level][week]
  std::vector<std::vector<double>> aggregate;               // [level][week]
  std::vector<double> aggregate_mean;
};

/// Simulated NegBin demand at `proposed` covariates for each retained draw,
/// summarized by pointwise quantiles. `proposed` holds one path per segment
/// or a single path shared by all segments.
PredictiveQuantiles posterior_predictive(const PosteriorDraws& draws,
                                         std::span<const CovariatePath> proposed,
                                         std::span<const double> levels, Rng& rng,
                                         std::size_t max_draws = 1000);

struct WeekObservation {
  std::size_t week = 0;
  std::vector<std::int64_t> counts;    // per segment
  std::vector<Eigen::VectorXd> x;      // per segment, length C
  std::vector<Eigen::VectorXd> z;      // per segment, length D
};

/// Refit with one more week, started from the previous posterior means.
/// Throws DomainError unless `week` is the next week of the fitted data.
PosteriorDraws update_with_new_week(const PosteriorDraws& draws, const WeekObservation& week);

/// Undo the last update: reruns the parent fit from its own starting state.
PosteriorDraws remove_last_week(const PosteriorDraws& draws);

}  // namespace tunedemand
