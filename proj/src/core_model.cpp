#include "tunedemand/core_model.hpp"

#include <algorithm>
#include <string>

#include "tunedemand/affinity.hpp"
#include "tunedemand/error.hpp"

namespace tunedemand {

void ListenerPopulation::validate() const {
  if (size < 1) throw ConfigurationError("population size must be at least 1");
  if (horizon < 4) throw ConfigurationError("horizon must be at least 4 weeks");
}

SegmentCovering::SegmentCovering(std::size_t population,
                                 std::vector<std::vector<Membership>> weekly)
    : population_(population), weekly_(std::move(weekly)) {
  if (population_ == 0) throw ConfigurationError("covering over an empty population");
  if (weekly_.empty()) throw ConfigurationError("covering needs at least one week");
  const std::size_t segments = weekly_.front().size();
  if (segments == 0) throw ConfigurationError("covering needs at least one segment");
  for (std::size_t t = 0; t < weekly_.size(); ++t) {
    if (weekly_[t].size() != segments) {
      throw ConfigurationError("week " + std::to_string(t) + " has a different segment count");
    }
    for (std::size_t j = 0; j < segments; ++j) {
      auto& m = weekly_[t][j];
      std::sort(m.begin(), m.end());
      m.erase(std::unique(m.begin(), m.end()), m.end());
      if (m.empty()) {
        throw ConfigurationError("segment " + std::to_string(j) + " is empty at week " +
                                 std::to_string(t));
      }
      if (m.back() >= population_) {
        throw ConfigurationError("listener id " + std::to_string(m.back()) +
                                 " outside population");
      }
    }
  }
}

SegmentCovering SegmentCovering::constant(std::size_t population, std::size_t horizon,
                                          std::vector<Membership> segments) {
  return SegmentCovering(population, std::vector<std::vector<Membership>>(horizon, segments));
}

const Membership& SegmentCovering::members(std::size_t week, std::size_t segment) const {
  return weekly_.at(week).at(segment);
}

CovariatePath::CovariatePath(Eigen::MatrixXd x, Eigen::MatrixXd z)
    : endogenous(std::move(x)), exogenous(std::move(z)) {
  validate();
}

void CovariatePath::validate() const {
  if (endogenous.rows() != exogenous.rows()) {
    throw ConfigurationError("covariate blocks have different horizons");
  }
  auto in_unit = [](const Eigen::MatrixXd& m) {
    return m.size() == 0 || (m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0);
  };
  if (!in_unit(endogenous) || !in_unit(exogenous)) {
    throw DomainError("covariate entries must lie in [0, 1]");
  }
}

CovariatePath CovariatePath::zeros(std::size_t horizon, std::size_t channels, std::size_t ambient) {
  return CovariatePath(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(channels)),
                       Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(horizon), static_cast<Eigen::Index>(ambient)));
}

void AffinityModel::check_dimensions(std::size_t channels, std::size_t ambient) const {
  if (theta.size() != gamma.size()) {
    throw ConfigurationError("theta and gamma segment counts differ");
  }
  for (std::size_t j = 0; j < theta.size(); ++j) {
    if (static_cast<std::size_t>(theta[j].size()) != channels ||
        static_cast<std::size_t>(gamma[j].size()) != ambient) {
      throw ConfigurationError("segment " + std::to_string(j) +
                               " effects do not match covariate dimensions");
    }
  }
}

void DemandCurve::validate() const {
  for (auto v : values) {
    if (v < 0) throw ValidationError("demand curve '" + song_id + "' has a negative count");
  }
}

int draw_utility(double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("utility probability outside [0, 1]");
  if (p == 0.0) return 0;
  if (p == 1.0) return 1;
  return rng.uniform() < p ? 1 : 0;
}

std::int64_t simulate_segment_demand(std::span<const ListenerId> segment,
                                     const AffinityModel& model, std::size_t segment_index,
                                     const CovariatePath& covariates, std::size_t week, Rng& rng) {
  if (segment.empty()) throw ConfigurationError("cannot simulate an empty segment");
  model.check_dimensions(covariates.channels(), covariates.ambient());
  if (week >= covariates.horizon()) throw DomainError("week beyond covariate horizon");
  const double p = affinity_predict(model, segment_index, covariates.x(week), covariates.z(week));
  std::int64_t count = 0;
  for (std::size_t i = 0; i < segment.size(); ++i) count += draw_utility(p, rng);
  return count;
}

std::vector<DemandCurve> simulate_demand(const SegmentCovering& covering,
                                         const AffinityModel& model,
                                         const CovariatePath& covariates, Rng& rng,
                                         const std::string& song_id) {
  if (model.segment_count() != covering.segment_count()) {
    throw ConfigurationError("model and covering segment counts differ");
  }
  if (covariates.horizon() != covering.horizon()) {
    throw ConfigurationError("covariate and covering horizons differ");
  }
  std::vector<DemandCurve> curves(covering.segment_count());
  for (std::size_t j = 0; j < curves.size(); ++j) {
    curves[j].song_id = song_id;
    curves[j].stratum = static_cast<int>(j);
    curves[j].values.resize(covering.horizon());
  }
  for (std::size_t t = 0; t < covering.horizon(); ++t) {
    for (std::size_t j = 0; j < curves.size(); ++j) {
      curves[j].values[t] =
          simulate_segment_demand(covering.members(t, j), model, j, covariates, t, rng);
    }
  }
  return curves;
}

DemandCurve aggregate_demand(std::span<const DemandCurve> curves) {
  if (curves.empty()) throw DomainError("aggregate of no curves");
  DemandCurve out;
  out.song_id = curves.front().song_id;
  out.origin = curves.front().origin;
  out.values.assign(curves.front().horizon(), 0);
  for (const auto& c : curves) {
    if (c.horizon() != out.horizon()) throw DomainError("curves have different horizons");
    if (c.song_id != out.song_id) throw DomainError("curves belong to different songs");
    for (std::size_t t = 0; t < c.horizon(); ++t) out.values[t] += c.values[t];
  }
  return out;
}

ExtremalCurves extremal_curves(const SegmentCovering& covering, const AffinityModel& model,
                               const CovariatePath& covariates, Rng& rng,
                               const std::string& song_id) {
  if (model.segment_count() != covering.segment_count()) {
    throw ConfigurationError("model and covering segment counts differ");
  }
  if (covariates.horizon() != covering.horizon()) {
    throw ConfigurationError("covariate and covering horizons differ");
  }
  model.check_dimensions(covariates.channels(), covariates.ambient());
  ExtremalCurves out;
  out.upper.song_id = out.lower.song_id = song_id;
  out.upper.values.assign(covering.horizon(), 0);
  out.lower.values.assign(covering.horizon(), 0);
  for (std::size_t t = 0; t < covering.horizon(); ++t) {
    const auto x = covariates.x(t);
    const auto z = covariates.z(t);
    double hi = 0.0;
    double lo = 1.0;
    for (std::size_t j = 0; j < model.segment_count(); ++j) {
      const double p = affinity_predict(model, j, x, z);
      hi = std::max(hi, p);
      lo = std::min(lo, p);
    }
    for (std::size_t i = 0; i < covering.population(); ++i) {
      const double u = rng.uniform();
      out.upper.values[t] += (u < hi) ? 1 : 0;
      out.lower.values[t] += (u < lo) ? 1 : 0;
    }
  }
  return out;
}

Membership sparse_audience(const SegmentCovering& covering, std::size_t week) {
  std::vector<std::uint32_t> multiplicity(covering.population(), 0);
  for (const auto& segment : covering.week(week)) {
    for (auto id : segment) ++multiplicity[id];
  }
  Membership out;
  for (std::size_t i = 0; i < multiplicity.size(); ++i) {
    if (multiplicity[i] == 1) out.push_back(static_cast<ListenerId>(i));
  }
  return out;
}

CoveringReport verify_covering(const SegmentCovering& covering) {
  CoveringReport report;
  std::vector<std::string> uncovered;
  for (std::size_t t = 0; t < covering.horizon(); ++t) {
    std::vector<bool> seen(covering.population(), false);
    std::size_t total = 0;
    for (const auto& segment : covering.week(t)) {
      total += segment.size();
      for (auto id : segment) seen[id] = true;
    }
    const auto covered = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
    report.union_size.push_back(covered);
    report.total_size.push_back(total);
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) uncovered.push_back(std::to_string(t) + ":" + std::to_string(i));
    }
  }
  if (!uncovered.empty()) {
    throw ValidationError("segments do not cover the population", std::move(uncovered));
  }
  return report;
}

}  // namespace tunedemand
