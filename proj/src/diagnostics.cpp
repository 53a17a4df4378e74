#include "tunedemand/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::size_t common_length(std::span<const std::vector<double>> chains) {
  if (chains.empty()) throw DomainError("no chains");
  const auto n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DomainError("chains differ in length");
  }
  return n;
}

}  // namespace

double split_rhat(std::span<const std::vector<double>> chains) {
  const auto n = common_length(chains);
  if (n < 4) return std::nan("");
  const auto half = n / 2;
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + (n - half), half);
  }
  const auto m = static_cast<double>(parts.size());
  const auto len = static_cast<double>(half);
  std::vector<double> means;
  double within = 0.0;
  for (auto p : parts) {
    means.push_back(mean_of(p));
    within += variance_of(p);
  }
  within /= m;
  const double between = len * variance_of(means);
  if (within <= 0.0) return between <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double pooled = (len - 1.0) / len * within + between / len;
  return std::sqrt(pooled / within);
}

double effective_sample_size(std::span<const std::vector<double>> chains) {
  const auto n = common_length(chains);
  const auto m = chains.size();
  if (n < 4) return static_cast<double>(n * m);
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(variance_of(c));
  }
  const double within = mean_of(vars);
  const double between = m > 1 ? static_cast<double>(n) * variance_of(means) : 0.0;
  const double pooled = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * within +
                        between / static_cast<double>(n);
  if (pooled <= 0.0) return static_cast<double>(n * m);

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) {
        s += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
      }
      acov += s / static_cast<double>(n);
    }
    acov /= static_cast<double>(m);
    return 1.0 - (within - acov) / pooled;
  };

  double sum = 0.0;
  for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
    const double pair = rho(lag) + rho(lag + 1);
    if (pair < 0.0) break;
    sum += pair;
  }
  const double tau = std::max(1.0 + 2.0 * sum, 1e-3);
  return static_cast<double>(n * m) / tau;
}

}  // namespace tunedemand
