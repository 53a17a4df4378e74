#include "tunedemand/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tunedemand/error.hpp"
#include "tunedemand/rng.hpp"

namespace tunedemand {
namespace {

Series z_normalized(const Series& s) {
  const double n = static_cast<double>(s.size());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  Series out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = sd > 0.0 ? (s[i] - mean) / sd : 0.0;
  return out;
}

// Accumulated squared cost table, (n+1) x (m+1) with an infinite border.
std::vector<double> cost_table(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("DTW needs non-empty series");
  const auto n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc((n + 1) * (m + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const double d = a[i - 1] - b[j - 1];
      at(i, j) = d * d + std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
    }
  }
  return acc;
}

}  // namespace

double dtw_distance(std::span<const double> a, std::span<const double> b) {
  const auto acc = cost_table(a, b);
  return std::sqrt(acc.back());
}

DtwAlignment dtw_align(std::span<const double> a, std::span<const double> b) {
  const auto acc = cost_table(a, b);
  const auto m = b.size();
  auto at = [&](std::size_t i, std::size_t j) { return acc[i * (m + 1) + j]; };
  DtwAlignment out;
  out.distance = std::sqrt(acc.back());
  std::size_t i = a.size(), j = b.size();
  while (i > 0 && j > 0) {
    out.path.emplace_back(i - 1, j - 1);
    const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
    if (diag <= up && diag <= left) {
      --i, --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

double dtw_inertia(const std::vector<Series>& curves, const Series& centre) {
  double s = 0.0;
  for (const auto& c : curves) {
    const double d = dtw_distance(c, centre);
    s += d * d;
  }
  return s;
}

Series dba_barycenter(const std::vector<Series>& curves, int iterations, const Series* initial) {
  if (curves.empty()) throw DomainError("DBA needs at least one curve");
  Series centre;
  if (initial) {
    centre = *initial;
  } else {
    std::vector<std::size_t> lengths;
    for (const auto& c : curves) lengths.push_back(c.size());
    std::sort(lengths.begin(), lengths.end());
    const auto median = lengths[(lengths.size() - 1) / 2];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : curves) {
      if (c.size() != median) continue;
      const double s = dtw_inertia(curves, c);
      if (s < best) {
        best = s;
        centre = c;
      }
    }
  }
  double inertia = dtw_inertia(curves, centre);
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> sum(centre.size(), 0.0), count(centre.size(), 0.0);
    for (const auto& c : curves) {
      for (auto [i, j] : dtw_align(centre, c).path) {
        sum[i] += c[j];
        count[i] += 1.0;
      }
    }
    Series next(centre.size());
    for (std::size_t i = 0; i < centre.size(); ++i) next[i] = sum[i] / count[i];
    const double next_inertia = dtw_inertia(curves, next);
    if (!(next_inertia < inertia)) break;
    centre = std::move(next);
    inertia = next_inertia;
  }
  return centre;
}

KMeansResult kmeans_curves(const std::vector<Series>& input, const KMeansOptions& options) {
  const auto n = input.size();
  const auto k = options.k;
  if (k == 0 || k > n) throw DomainError("k must lie in 1..number of curves");
  std::vector<Series> curves;
  for (const auto& c : input) {
    if (c.empty()) throw DomainError("empty curve");
    curves.push_back(options.z_normalize ? z_normalized(c) : c);
  }

  Rng rng(options.seed);
  std::vector<Series> centres;
  std::vector<bool> chosen(n, false);
  {
    auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    centres.push_back(curves[first]);
    chosen[first] = true;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = dtw_distance(curves[i], centres.back());
      d2[i] = d * d;
    }
    while (centres.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) total += d2[i];
      std::size_t pick = n;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || d2[i] <= 0.0) continue;
          pick = i;
          u -= d2[i];
          if (u < 0.0) break;
        }
      } else {
        for (std::size_t i = 0; i < n && pick == n; ++i)
          if (!chosen[i]) pick = i;
      }
      chosen[pick] = true;
      centres.push_back(curves[pick]);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = dtw_distance(curves[i], centres.back());
        d2[i] = std::min(d2[i], d * d);
      }
    }
  }

  KMeansResult result;
  std::vector<std::size_t> assignment(n, k);
  std::vector<double> cost(n, 0.0);
  auto assign = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = dtw_distance(curves[i], centres[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      // Keep the current cluster on ties so assignments settle.
      if (assignment[i] < k && dtw_distance(curves[i], centres[assignment[i]]) <= best_d) best = assignment[i];
      changed = changed || best != assignment[i];
      assignment[i] = best;
      const double d = dtw_distance(curves[i], centres[best]);
      cost[i] = d * d;
    }
    return changed;
  };
  auto total_inertia = [&]() { return std::accumulate(cost.begin(), cost.end(), 0.0); };

  assign();
  result.inertia_trace.push_back(total_inertia());
  for (int it = 1; it <= options.max_iterations; ++it) {
    result.iterations = it;
    // Empty clusters take the point farthest from its centre, from a cluster
    // that keeps at least one member.
    for (std::size_t c = 0; c < k; ++c) {
      if (std::count(assignment.begin(), assignment.end(), c) > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (std::count(assignment.begin(), assignment.end(), assignment[i]) < 2) continue;
        if (far == n || cost[i] > cost[far]) far = i;
      }
      if (far == n || cost[far] <= 0.0) continue;
      centres[c] = curves[far];
      assignment[far] = c;
      cost[far] = 0.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<Series> members;
      for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] == c) members.push_back(curves[i]);
      if (members.empty()) continue;
      centres[c] = dba_barycenter(members, options.dba_iterations, &centres[c]);
    }
    const bool changed = assign();
    result.inertia_trace.push_back(total_inertia());
    if (!changed) break;
  }

  result.assignment = assignment;
  for (std::size_t c = 0; c < k; ++c) {
    CurveCluster cluster;
    cluster.centroid = centres[c];
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment[i] != c) continue;
      cluster.members.push_back(i);
      cluster.inertia += cost[i];
    }
    result.clusters.push_back(std::move(cluster));
  }
  return result;
}

double cluster_purity(const std::vector<std::size_t>& assignment, const std::vector<std::size_t>& labels) {
  if (assignment.size() != labels.size() || assignment.empty()) throw DomainError("purity needs matching labels");
  const auto clusters = *std::max_element(assignment.begin(), assignment.end()) + 1;
  const auto classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> table(clusters, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < assignment.size(); ++i) ++table[assignment[i]][labels[i]];
  std::size_t hits = 0;
  for (const auto& row : table) hits += *std::max_element(row.begin(), row.end());
  return static_cast<double>(hits) / static_cast<double>(assignment.size());
}

}  // namespace tunedemand
