#include "tunedemand/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

double ambient_level(const Eigen::VectorXd& gamma, const Eigen::VectorXd& z) {
  if (gamma.size() != z.size()) throw ConfigurationError("gamma and z differ in length");
  return gamma.size() == 0 ? 0.0 : gamma.dot(z);
}

// First index of the largest entry.
Eigen::Index best_channel(const Eigen::VectorXd& theta) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < theta.size(); ++c)
    if (theta(c) > theta(best)) best = c;
  return best;
}

double clip01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

Eigen::VectorXd closed_form_null(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                                 const Eigen::VectorXd& z, double budget) {
  const double norm2 = theta.squaredNorm();
  if (theta.size() == 0 || norm2 == 0.0) throw DomainError("closed form needs a nonzero theta");
  if (!(budget >= 0.0)) throw DomainError("budget must be non-negative");
  const double gz = ambient_level(gamma, z);
  if (gz > 1.0) throw DomainError("gamma.z exceeds 1: no room under the probability ceiling");
  const double level = std::min(budget, 1.0 - gz);
  return theta * (level / norm2);
}

LpSolution lp_null_max(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma, const Eigen::VectorXd& z,
                       double budget) {
  if (!(budget >= 0.0)) throw DomainError("budget must be non-negative");
  const double gz = ambient_level(gamma, z);
  if (gz > 1.0) throw InfeasibleError("gamma.z exceeds 1: probability ceiling infeasible");
  LpSolution out;
  out.spend = Eigen::VectorXd::Zero(theta.size());
  out.objective = gz;
  if (theta.size() == 0) return out;
  const auto c = best_channel(theta);
  if (!(theta(c) > 0.0)) return out;
  const double amount = std::min(budget, (1.0 - gz) / theta(c));
  out.spend(c) = amount;
  out.objective = gz + theta(c) * amount;
  return out;
}

SchemeComparison compare_schemes(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                                 const Eigen::VectorXd& z, double budget) {
  SchemeComparison out;
  out.lp = lp_null_max(theta, gamma, z, budget);
  out.closed_form = closed_form_null(theta, gamma, z, budget);
  const double gz = ambient_level(gamma, z);
  out.closed_form_objective = theta.dot(out.closed_form) + gz;
  out.closed_form_spend = out.closed_form.sum();
  out.budget_violation = out.closed_form_spend > budget;
  const bool cf_feasible = !out.budget_violation && out.closed_form.minCoeff() >= 0.0;
  if (!cf_feasible || out.lp.objective > out.closed_form_objective + 1e-12) {
    out.dominant = "lp";
  } else if (out.closed_form_objective > out.lp.objective + 1e-12) {
    out.dominant = "closed_form";
  } else {
    out.dominant = "tie";
  }
  return out;
}

std::array<PhaseMaximum, 4> forced_phase_max(const EnvelopeFit& fit) {
  const auto k = fit.taus.as_array();
  const std::array<std::size_t, 5> pos{0, k[0], k[1], k[2], k[3]};
  std::array<PhaseMaximum, 4> out;
  for (int r = 0; r < 4; ++r) {
    const double left = adsr_mean(static_cast<double>(pos[r]), fit);
    const double right = adsr_mean(static_cast<double>(pos[r + 1]), fit);
    out[r] = right > left ? PhaseMaximum{pos[r + 1], right} : PhaseMaximum{pos[r], left};
  }
  return out;
}

ReallocationResult reallocate_across_segments(const std::vector<SegmentTarget>& segments, double budget) {
  if (segments.empty()) throw ConfigurationError("reallocation needs at least one segment");
  if (!(budget >= 0.0)) throw DomainError("budget must be non-negative");
  ReallocationResult out;
  out.budget.assign(segments.size(), 0.0);
  for (const auto& s : segments) out.spend.push_back(Eigen::VectorXd::Zero(s.theta.size()));

  struct Candidate {
    std::size_t segment;
    Eigen::Index channel;
    double rate;
    double capacity;
  };
  std::vector<Candidate> order;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const auto& s = segments[j];
    if (s.ambient > 1.0) throw InfeasibleError("segment " + std::to_string(j) + ": gamma.z exceeds 1");
    if (s.theta.size() == 0) continue;
    const auto c = best_channel(s.theta);
    if (!(s.theta(c) > 0.0) || !(s.size > 0.0)) continue;
    order.push_back({j, c, s.size * s.theta(c), (1.0 - s.ambient) / s.theta(c)});
  }
  std::stable_sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) { return a.rate > b.rate; });

  double left = budget;
  for (const auto& cand : order) {
    if (left <= 0.0) break;
    const double amount = std::min(left, cand.capacity);
    out.budget[cand.segment] = amount;
    out.spend[cand.segment](cand.channel) = amount;
    out.gain += cand.rate * amount;
    left -= amount;
  }
  out.unspent = std::max(0.0, left);
  if (out.unspent > 0.0) {
    out.warnings.push_back("surplus budget: " + std::to_string(out.unspent) +
                           " unspent, no segment can absorb more (ceiling reached or no positive effect)");
  }
  return out;
}

double BudgetPolicy::total() const { return std::accumulate(weekly.begin(), weekly.end(), 0.0); }

void BudgetPolicy::validate() const {
  for (std::size_t t = 0; t < weekly.size(); ++t) {
    if (!(weekly[t] >= 0.0) || !std::isfinite(weekly[t])) {
      throw ValidationError("weekly budget must be a non-negative number", {"week " + std::to_string(t)});
    }
  }
  if (!(social_cap >= 0.0)) throw ValidationError("social cap must be non-negative");
}

AllocationPath plan_horizon(const BudgetPolicy& policy, const std::vector<WeekState>& states, Scheme scheme,
                            const std::optional<ChangePoints>& taus) {
  policy.validate();
  const auto T = policy.weekly.size();
  if (states.size() != T) throw ConfigurationError("one model state per budget week is required");
  if (T == 0) return {};
  const auto J = states.front().size();
  for (const auto& w : states) {
    if (w.size() != J || J == 0) throw ConfigurationError("every week needs the same non-empty segment list");
  }

  AllocationPath path;
  path.scheme = scheme;
  path.spend.resize(T);
  path.affinity.resize(T);
  path.weekly_spend.assign(T, 0.0);

  auto targets_for = [&](const WeekState& w) {
    std::vector<SegmentTarget> out;
    for (const auto& s : w) out.push_back({s.theta, s.size, ambient_level(s.gamma, s.z)});
    return out;
  };

  if (scheme == Scheme::Null) {
    for (std::size_t t = 0; t < T; ++t) {
      auto result = reallocate_across_segments(targets_for(states[t]), policy.weekly[t]);
      path.spend[t] = std::move(result.spend);
      for (auto& w : result.warnings) path.warnings.push_back("week " + std::to_string(t) + ": " + w);
    }
  } else {
    if (!taus) throw ConfigurationError("forced scheme needs change points");
    taus->validate(std::max(T, taus->release + 1));
    // A policy shorter than the envelope covers the leading phases only.
    for (int r = 0; r < 4; ++r) {
      auto [lo, hi] = phase_weeks(static_cast<Phase>(r), *taus, T);
      hi = std::min(hi, T);
      if (hi <= lo) continue;
      const double pooled = std::accumulate(policy.weekly.begin() + static_cast<std::ptrdiff_t>(lo),
                                            policy.weekly.begin() + static_cast<std::ptrdiff_t>(hi), 0.0);
      const double per_week = pooled / static_cast<double>(hi - lo);
      // Phase targets: effects of the first week, tightest ceiling of the phase.
      auto targets = targets_for(states[lo]);
      for (std::size_t t = lo + 1; t < hi; ++t) {
        const auto week = targets_for(states[t]);
        for (std::size_t j = 0; j < J; ++j) targets[j].ambient = std::max(targets[j].ambient, week[j].ambient);
      }
      auto result = reallocate_across_segments(targets, per_week);
      for (std::size_t t = lo; t < hi; ++t) path.spend[t] = result.spend;
      for (auto& w : result.warnings) path.warnings.push_back("phase " + std::to_string(r + 1) + ": " + w);
    }
  }

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < J; ++j) {
      const auto& s = states[t][j];
      const double p = clip01(s.theta.dot(path.spend[t][j]) + ambient_level(s.gamma, s.z));
      path.affinity[t].push_back(p);
      path.objective += s.size * p;
      path.weekly_spend[t] += path.spend[t][j].sum();
    }
    path.total_spend += path.weekly_spend[t];
  }
  return path;
}

}  // namespace tunedemand
