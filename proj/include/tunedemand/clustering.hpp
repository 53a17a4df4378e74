#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tunedemand {

using Series = std::vector<double>;

struct DtwAlignment {
  double distance = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;  // from (0,0) to (n-1,m-1)
};

/// Square root of the smallest accumulated squared difference over warping
/// paths with steps (1,0), (0,1), (1,1). Throws DomainError on empty input.
double dtw_distance(std::span<const double> a, std::span<const double> b);
DtwAlignment dtw_align(std::span<const double> a, std::span<const double> b);

/// DTW barycenter averaging. Starts from `initial` when given, otherwise
/// from the medoid among curves of median length, and stops once the sum of
/// squared DTW distances no longer falls.
Series dba_barycenter(const std::vector<Series>& curves, int iterations = 10, const Series* initial = nullptr);

/// Sum of squared DTW distances from each curve to `centre`.
double dtw_inertia(const std::vector<Series>& curves, const Series& centre);

struct CurveCluster {
  Series centroid;
  std::vector<std::size_t> members;  // indices into the input
  double inertia = 0.0;
};

struct KMeansOptions {
  std::size_t k = 7;
  std::uint64_t seed = 1;
  int max_iterations = 50;
  int dba_iterations = 10;
  bool z_normalize = false;
};

struct KMeansResult {
  std::vector<CurveCluster> clusters;
  std::vector<std::size_t> assignment;
  /// Total inertia after seeding and after each iteration.
  std::vector<double> inertia_trace;
  int iterations = 0;
};

/// k-means under DTW with DBA centroids and k-means++ seeding. Deterministic
/// for a seed. Throws DomainError when k is 0 or exceeds the curve count.
KMeansResult kmeans_curves(const std::vector<Series>& curves, const KMeansOptions& options = {});

/// Fraction of curves whose cluster's majority label matches their own.
double cluster_purity(const std::vector<std::size_t>& assignment, const std::vector<std::size_t>& labels);

}  // namespace tunedemand
