#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tunedemand/rng.hpp"

namespace tunedemand {

using ListenerId = std::uint32_t;
/// Sorted, duplicate-free listener ids.
using Membership = std::vector<ListenerId>;

struct ListenerPopulation {
  std::size_t size = 1;
  std::size_t horizon = 4;

  /// Throws ConfigurationError unless size >= 1 and horizon >= 4.
  void validate() const;
};

/// Per-week, possibly overlapping audience segments over listeners 0..N-1.
///
/// Construction checks shape (same J every week, ids in range, no empty
/// segment) and normalizes each membership to sorted unique order. Whether
/// the segments actually cover the population is `verify_covering`'s job.
class SegmentCovering {
 public:
  SegmentCovering(std::size_t population, std::vector<std::vector<Membership>> weekly);

  /// The same segments at every week.
  static SegmentCovering constant(std::size_t population, std::size_t horizon,
                                  std::vector<Membership> segments);

  std::size_t population() const noexcept { return population_; }
  std::size_t horizon() const noexcept { return weekly_.size(); }
  std::size_t segment_count() const noexcept { return weekly_.front().size(); }
  const Membership& members(std::size_t week, std::size_t segment) const;
  const std::vector<Membership>& week(std::size_t week) const { return weekly_.at(week); }

 private:
  std::size_t population_;
  std::vector<std::vector<Membership>> weekly_;
};

/// Marketing spend (endogenous, T x C) and ambient signal (exogenous, T x D),
/// every entry in [0, 1]. Either block may have zero columns.
struct CovariatePath {
  Eigen::MatrixXd endogenous;
  Eigen::MatrixXd exogenous;

  CovariatePath() = default;
  CovariatePath(Eigen::MatrixXd x, Eigen::MatrixXd z);

  std::size_t horizon() const noexcept { return static_cast<std::size_t>(endogenous.rows()); }
  std::size_t channels() const noexcept { return static_cast<std::size_t>(endogenous.cols()); }
  std::size_t ambient() const noexcept { return static_cast<std::size_t>(exogenous.cols()); }
  Eigen::VectorXd x(std::size_t week) const { return endogenous.row(static_cast<Eigen::Index>(week)).transpose(); }
  Eigen::VectorXd z(std::size_t week) const { return exogenous.row(static_cast<Eigen::Index>(week)).transpose(); }

  void validate() const;
  static CovariatePath zeros(std::size_t horizon, std::size_t channels, std::size_t ambient);
};

enum class Link { IdentityClipped, InverseLogit };

/// Segment-wise effects theta^j (length C) and gamma^j (length D).
struct AffinityModel {
  std::vector<Eigen::VectorXd> theta;
  std::vector<Eigen::VectorXd> gamma;
  Link link = Link::IdentityClipped;

  std::size_t segment_count() const noexcept { return theta.size(); }
  /// Throws ConfigurationError when the effect lengths disagree with C and D.
  void check_dimensions(std::size_t channels, std::size_t ambient) const;
};

/// Weekly counts for one song and one stratum; `stratum == nullopt` marks
/// the aggregate over strata.
struct DemandCurve {
  std::string song_id;
  std::optional<int> stratum;
  std::vector<std::int64_t> values;
  bool origin = true;

  std::size_t horizon() const noexcept { return values.size(); }
  bool is_aggregate() const noexcept { return !stratum.has_value(); }
  void validate() const;
  friend bool operator==(const DemandCurve&, const DemandCurve&) = default;
};

/// One Bernoulli utility. Throws DomainError if p is outside [0, 1].
int draw_utility(double p, Rng& rng);

/// Sum of per-listener utilities over `segment` at `week`, each listener
/// streaming with the segment's affinity P_{t,j}.
std::int64_t simulate_segment_demand(std::span<const ListenerId> segment,
                                     const AffinityModel& model, std::size_t segment_index,
                                     const CovariatePath& covariates, std::size_t week, Rng& rng);

/// Segment curves for every segment of the covering over its horizon.
std::vector<DemandCurve> simulate_demand(const SegmentCovering& covering,
                                         const AffinityModel& model,
                                         const CovariatePath& covariates, Rng& rng,
                                         const std::string& song_id = "");

/// Pointwise sum across strata of one song.
DemandCurve aggregate_demand(std::span<const DemandCurve> curves);

struct ExtremalCurves {
  DemandCurve upper;
  DemandCurve lower;
};

/// Boundary processes: every listener of the population given the largest
/// (upper) or smallest (lower) segment affinity of the week. Both curves
/// share one uniform per listener and week, so lower <= upper pathwise.
ExtremalCurves extremal_curves(const SegmentCovering& covering, const AffinityModel& model,
                               const CovariatePath& covariates, Rng& rng,
                               const std::string& song_id = "");

/// Listeners that belong to exactly one segment at `week`.
Membership sparse_audience(const SegmentCovering& covering, std::size_t week);

struct CoveringReport {
  std::vector<std::size_t> union_size;
  std::vector<std::size_t> total_size;  // sum of segment cardinalities
};

/// Checks that the segments cover the population at every week. Throws
/// ValidationError whose details name each uncovered listener as "t:id".
CoveringReport verify_covering(const SegmentCovering& covering);

}  // namespace tunedemand
