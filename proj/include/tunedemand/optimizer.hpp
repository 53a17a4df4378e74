#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/envelope.hpp"

namespace tunedemand {

/// x* = min(B_t, 1 - gamma.z) theta / |theta|^2, so theta.x* = min(B_t, 1 - gamma.z).
/// Throws DomainError for zero theta, negative budget or gamma.z > 1.
Eigen::VectorXd closed_form_null(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                                 const Eigen::VectorXd& z, double budget);

struct LpSolution {
  Eigen::VectorXd spend;
  double objective = 0.0;  // theta.x + gamma.z
};

/// max theta.x + gamma.z s.t. 0 <= theta.x + gamma.z <= 1, 1'x <= B_t, x >= 0.
/// Spend goes to the first channel with the largest positive effect, up to
/// the budget or the probability ceiling. Throws InfeasibleError if gamma.z > 1.
LpSolution lp_null_max(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma, const Eigen::VectorXd& z,
                       double budget);

struct SchemeComparison {
  Eigen::VectorXd closed_form;
  double closed_form_objective = 0.0;
  double closed_form_spend = 0.0;
  LpSolution lp;
  /// 1'x* of the closed form exceeds B_t.
  bool budget_violation = false;
  /// "lp", "closed_form" or "tie", among budget-feasible solutions.
  std::string dominant;
};

SchemeComparison compare_schemes(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                                 const Eigen::VectorXd& z, double budget);

struct PhaseMaximum {
  std::size_t week = 0;
  double value = 0.0;
};

/// Maximizer of each linear phase of the envelope on its closed node
/// interval: the right end when the phase rises, otherwise the left end.
std::array<PhaseMaximum, 4> forced_phase_max(const EnvelopeFit& fit);

struct SegmentTarget {
  Eigen::VectorXd theta;  // channel effects
  double size = 0.0;      // |N_t^j|
  double ambient = 0.0;   // gamma.z for the week
};

struct ReallocationResult {
  std::vector<double> budget;             // per segment
  std::vector<Eigen::VectorXd> spend;     // per segment, all on its best channel
  double gain = 0.0;                      // sum of size * theta.x
  double unspent = 0.0;
  std::vector<std::string> warnings;
};

/// Greedy split of B_t by size * max_c theta_c per money unit; a segment
/// takes budget until theta.x reaches 1 - gamma.z, the rest spills over.
ReallocationResult reallocate_across_segments(const std::vector<SegmentTarget>& segments, double budget);

struct BudgetPolicy {
  std::vector<double> weekly;  // B_t
  double social_cap = 0.0;     // S

  double total() const;
  /// Throws ValidationError for negative or non-finite budgets.
  void validate() const;
};

enum class Scheme { Null, Forced };

struct SegmentWeek {
  Eigen::VectorXd theta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd z;
  double size = 1.0;
};

using WeekState = std::vector<SegmentWeek>;

struct AllocationPath {
  Scheme scheme = Scheme::Null;
  std::vector<std::vector<Eigen::VectorXd>> spend;  // [week][segment] -> channels
  std::vector<std::vector<double>> affinity;        // [week][segment], theta.x + gamma.z clipped to [0, 1]
  std::vector<double> weekly_spend;
  double total_spend = 0.0;
  double objective = 0.0;  // sum over weeks and segments of size * affinity
  std::vector<std::string> warnings;
};

/// Weekly plan. The null scheme reallocates each B_t on its own week. The
/// forced scheme pools the budgets of each phase of `taus` and spends the
/// phase average every week of the phase, against the tightest ceiling the
/// phase meets, so the plan is constant within phases.
AllocationPath plan_horizon(const BudgetPolicy& policy, const std::vector<WeekState>& states, Scheme scheme,
                            const std::optional<ChangePoints>& taus = std::nullopt);

}  // namespace tunedemand
