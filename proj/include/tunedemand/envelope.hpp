#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/core_model.hpp"
#include "tunedemand/estimation.hpp"

namespace tunedemand {

enum class Phase { Attack = 0, Sustain = 1, Decay = 2, Release = 3 };

/// Week indices of the four phase switches, 0 < attack < sustain < decay < release <= T-1.
struct ChangePoints {
  std::size_t attack = 1;
  std::size_t sustain = 2;
  std::size_t decay = 3;
  std::size_t release = 4;

  std::array<std::size_t, 4> as_array() const { return {attack, sustain, decay, release}; }
  bool ordered(std::size_t horizon) const noexcept;
  /// Throws DomainError unless ordered.
  void validate(std::size_t horizon) const;
  friend bool operator==(const ChangePoints&, const ChangePoints&) = default;
};

/// Phase of week t: attack before `attack`, sustain before `sustain`,
/// decay before `decay`, release from there on (the tail past `release`
/// included).
Phase phase_of(std::size_t t, const ChangePoints& taus) noexcept;

/// Half-open week range [first, last) of a phase over a horizon.
std::pair<std::size_t, std::size_t> phase_weeks(Phase phase, const ChangePoints& taus, std::size_t horizon);

struct PhaseEffects {
  Eigen::VectorXd theta;  // length C, no intercept: the envelope carries the level
  Eigen::VectorXd gamma;  // length D
};

enum class EnvelopeFamily { NegBin, LeastSquares };

/// Piecewise-linear mean through (0,0), (tau_A, mu_A), (tau_S, mu_S),
/// (tau_D, mu_D), (tau_R, 0), with covariate effects fitted per phase.
struct EnvelopeFit {
  ChangePoints taus;
  std::size_t horizon = 0;
  std::array<double, 3> nodes{};  // mu at attack, sustain, decay
  /// Phase lines alpha_r + beta_r t, derived from the nodes.
  std::array<double, 4> alpha{};
  std::array<double, 4> beta{};
  std::array<PhaseEffects, 4> effects;
  std::optional<double> dispersion;
  EnvelopeFamily family = EnvelopeFamily::NegBin;
  double log_likelihood = 0.0;
  int iterations = 0;

  /// Recomputes alpha and beta from taus and nodes.
  void refresh_lines();
};

/// Envelope mean at 0 <= t <= tau_R; negative values clamp to 0. Throws
/// DomainError outside that range.
double adsr_mean(double t, const EnvelopeFit& fit);

/// Envelope for weeks 0..horizon-1, zero past tau_R.
std::vector<double> envelope_curve(const ChangePoints& taus, const std::array<double, 3>& nodes,
                                   std::size_t horizon);

struct ChangePointConfig {
  /// Minimum weeks in the attack, sustain and decay phases.
  std::size_t min_phase_weeks = 2;
};

/// Least-squares change points of the continuous envelope with free node
/// heights. Branch-and-bound over the stage recursion: each partial path
/// carries its residual as a quadratic in the latest node height, and a path
/// whose minimum already exceeds the incumbent is dropped. Ties go to the
/// earliest (attack, sustain, decay, release). Throws DegenerateFitError for
/// a monotone or flat series and ConfigurationError for T < 8.
ChangePoints fit_changepoints(const DemandCurve& curve, const ChangePointConfig& config = {});
/// Same search on a real-valued series.
ChangePoints fit_changepoints(std::span<const double> y, const ChangePointConfig& config = {});

/// Residual sum of squares of the best envelope at fixed change points.
double envelope_rss(std::span<const double> y, const ChangePoints& taus);

/// Log of the sequential restricted-uniform prior: tau_A uniform on
/// {2..T-1}, each later change point uniform on {previous+1..T-1},
/// renormalized over chains that fit. -inf off support.
double changepoint_prior_logpmf(const ChangePoints& taus, std::size_t horizon);

/// The four conditional log factors of the prior before renormalization.
std::array<double, 4> changepoint_prior_factors(const ChangePoints& taus, std::size_t horizon);

/// One draw from the change-point prior.
ChangePoints sample_changepoint_prior(std::size_t horizon, Rng& rng);

struct PartiteOptions {
  EnvelopeFamily family = EnvelopeFamily::NegBin;
  int max_iterations = 100;
  double relative_tolerance = 1e-9;
};

/// Node heights, per-phase covariate effects and dispersion at fixed change
/// points. The mean is envelope(t) * exp(theta_r.x_t + gamma_r.z_t); phase r
/// effects use phase r weeks only. Every phase needs at least two weeks or
/// PhaseSupportError is thrown.
EnvelopeFit fit_partite(const DemandCurve& curve, const ChangePoints& taus,
                        const CovariatePath& covariates, const PartiteOptions& options = {});

/// Expected weekly demand of a fit under covariates.
std::vector<double> envelope_prediction(const EnvelopeFit& fit, const CovariatePath& covariates);

}  // namespace tunedemand
