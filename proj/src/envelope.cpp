#include "tunedemand/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/tools/minima.hpp>

#include "tunedemand/error.hpp"

namespace tunedemand {
namespace {

constexpr double kMeanFloor = 1e-3;

std::vector<double> as_doubles(const DemandCurve& curve) {
  std::vector<double> y(curve.values.size());
  std::transform(curve.values.begin(), curve.values.end(), y.begin(),
                 [](std::int64_t v) { return static_cast<double>(v); });
  return y;
}

// a h^2 + b h + c
struct Quadratic {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double minimum() const { return a > 0.0 ? c - b * b / (4.0 * a) : c; }
};

// Residual of the line from (t0, h0) to (t1, h1) over weeks t0+1..t1:
// A h0^2 + B h1^2 + 2C h0 h1 - 2D h0 - 2E h1 + F.
struct SegmentCost {
  double A, B, C, D, E, F;
};

class PrefixSums {
 public:
  explicit PrefixSums(std::span<const double> y) : y_(y.size() + 1, 0.0), ty_(y.size() + 1, 0.0), yy_(y.size() + 1, 0.0) {
    for (std::size_t t = 0; t < y.size(); ++t) {
      y_[t + 1] = y_[t] + y[t];
      ty_[t + 1] = ty_[t] + static_cast<double>(t) * y[t];
      yy_[t + 1] = yy_[t] + y[t] * y[t];
    }
  }

  // Sums over weeks lo..hi-1.
  double y(std::size_t lo, std::size_t hi) const { return y_[hi] - y_[lo]; }
  double ty(std::size_t lo, std::size_t hi) const { return ty_[hi] - ty_[lo]; }
  double yy(std::size_t lo, std::size_t hi) const { return yy_[hi] - yy_[lo]; }
  std::size_t size() const { return y_.size() - 1; }

  SegmentCost segment(std::size_t t0, std::size_t t1) const {
    const double L = static_cast<double>(t1 - t0);
    const double s1 = L * (L + 1.0) / 2.0;
    const double s2 = L * (L + 1.0) * (2.0 * L + 1.0) / 6.0;
    const double sv = s1 / L;
    const double svv = s2 / (L * L);
    const double sy = y(t0 + 1, t1 + 1);
    const double syv = (ty(t0 + 1, t1 + 1) - static_cast<double>(t0) * sy) / L;
    return {L - 2.0 * sv + svv, svv, sv - svv, sy - syv, syv, yy(t0 + 1, t1 + 1)};
  }

 private:
  std::vector<double> y_, ty_, yy_;
};

// min over the previous height of q(h0) + cost(h0, h1), as a quadratic in h1.
Quadratic extend(const Quadratic& q, const SegmentCost& s) {
  const double p = q.a + s.A;
  const double k = q.b - 2.0 * s.D;
  return {s.B - s.C * s.C / p, -2.0 * s.E - s.C * k / p, s.F + q.c - k * k / (4.0 * p)};
}

// Closes the path at (t1, 0) and adds the zero-predicted tail.
double close(const Quadratic& q, const SegmentCost& s, double tail) {
  const Quadratic total{q.a + s.A, q.b - 2.0 * s.D, q.c + s.F};
  return total.minimum() + tail;
}

bool is_monotone(std::span<const double> y) {
  bool up = true, down = true;
  for (std::size_t t = 1; t < y.size(); ++t) {
    up = up && y[t] >= y[t - 1];
    down = down && y[t] <= y[t - 1];
  }
  return up || down;
}

double line_value(double t, double t0, double h0, double t1, double h1) {
  const double w = (t - t0) / (t1 - t0);
  return h0 * (1.0 - w) + h1 * w;
}

// Hat-function basis of the envelope: column k is the weight of node k.
Eigen::MatrixXd node_basis(const ChangePoints& taus, std::size_t horizon) {
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(horizon), 3);
  const auto knots = taus.as_array();
  const std::array<double, 5> pos{0.0, double(knots[0]), double(knots[1]), double(knots[2]), double(knots[3])};
  for (std::size_t t = 0; t < horizon; ++t) {
    const double x = static_cast<double>(t);
    for (int seg = 0; seg < 4; ++seg) {
      if (x > pos[seg] && x <= pos[seg + 1]) {
        const double w = (x - pos[seg]) / (pos[seg + 1] - pos[seg]);
        if (seg > 0) basis(static_cast<Eigen::Index>(t), seg - 1) += 1.0 - w;
        if (seg < 3) basis(static_cast<Eigen::Index>(t), seg) += w;
      }
    }
  }
  return basis;
}

double negbin_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, double omega) {
  double ll = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    ll += negbin_log_pmf(static_cast<std::int64_t>(y(t)), std::max(mean(t), kMeanFloor), omega);
  }
  return ll;
}

// Identity-link NegBin for mean = B mu, by Fisher scoring with step halving.
Eigen::VectorXd identity_link_nodes(const Eigen::MatrixXd& B, const Eigen::VectorXd& y, double omega,
                                    Eigen::VectorXd mu) {
  double ll = negbin_loglik(y, B * mu, omega);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd mean = (B * mu).cwiseMax(kMeanFloor);
    const Eigen::VectorXd w = (1.0 / (mean.array() + mean.array().square() / omega)).matrix();
    const Eigen::MatrixXd info = B.transpose() * w.asDiagonal() * B;
    const Eigen::VectorXd proposal = info.ldlt().solve(B.transpose() * w.asDiagonal() * y).cwiseMax(kMeanFloor);
    Eigen::VectorXd next = proposal;
    double next_ll = negbin_loglik(y, B * next, omega);
    double step = 1.0;
    while (!(next_ll >= ll) && step > 1e-6) {
      step *= 0.5;
      next = mu + step * (proposal - mu);
      next_ll = negbin_loglik(y, B * next, omega);
    }
    if (!(next_ll >= ll)) break;
    const double previous = ll;
    mu = next;
    ll = next_ll;
    if (std::abs(ll - previous) <= 1e-12 * (std::abs(previous) + 1e-12)) break;
  }
  return mu;
}

// Log-link NegBin on one phase: log mean = offset + X beta.
Eigen::VectorXd log_link_effects(const Eigen::MatrixXd& X, const Eigen::VectorXd& offset,
                                 const Eigen::VectorXd& y, double omega, Eigen::VectorXd beta) {
  auto mean_of = [&](const Eigen::VectorXd& b) {
    return (offset + X * b).array().min(50.0).max(-50.0).exp().matrix().eval();
  };
  double ll = negbin_loglik(y, mean_of(beta), omega);
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd mean = mean_of(beta);
    const Eigen::VectorXd w = (mean.array() / (1.0 + mean.array() / omega)).matrix();
    const Eigen::VectorXd score = X.transpose() * (w.array() * (y - mean).array() / mean.array()).matrix();
    Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
    info += 1e-10 * Eigen::MatrixXd::Identity(info.rows(), info.cols());
    const Eigen::VectorXd proposal = beta + info.ldlt().solve(score);
    Eigen::VectorXd next = proposal;
    double next_ll = negbin_loglik(y, mean_of(next), omega);
    double step = 1.0;
    while (!(next_ll >= ll) && step > 1e-6) {
      step *= 0.5;
      next = beta + step * (proposal - beta);
      next_ll = negbin_loglik(y, mean_of(next), omega);
    }
    if (!(next_ll >= ll)) break;
    const double previous = ll;
    beta = next;
    ll = next_ll;
    if (std::abs(ll - previous) <= 1e-12 * (std::abs(previous) + 1e-12)) break;
  }
  return beta;
}

}  // namespace

bool ChangePoints::ordered(std::size_t horizon) const noexcept {
  return 0 < attack && attack < sustain && sustain < decay && decay < release && release + 1 <= horizon;
}

void ChangePoints::validate(std::size_t horizon) const {
  if (!ordered(horizon)) {
    throw DomainError("change points must satisfy 0 < tau_A < tau_S < tau_D < tau_R <= T-1");
  }
}

Phase phase_of(std::size_t t, const ChangePoints& taus) noexcept {
  if (t < taus.attack) return Phase::Attack;
  if (t < taus.sustain) return Phase::Sustain;
  if (t < taus.decay) return Phase::Decay;
  return Phase::Release;
}

std::pair<std::size_t, std::size_t> phase_weeks(Phase phase, const ChangePoints& taus, std::size_t horizon) {
  switch (phase) {
    case Phase::Attack: return {0, taus.attack};
    case Phase::Sustain: return {taus.attack, taus.sustain};
    case Phase::Decay: return {taus.sustain, taus.decay};
    case Phase::Release: return {taus.decay, horizon};
  }
  return {0, 0};
}

void EnvelopeFit::refresh_lines() {
  const auto k = taus.as_array();
  const std::array<double, 5> t{0.0, double(k[0]), double(k[1]), double(k[2]), double(k[3])};
  const std::array<double, 5> h{0.0, nodes[0], nodes[1], nodes[2], 0.0};
  for (int r = 0; r < 4; ++r) {
    beta[r] = (h[r + 1] - h[r]) / (t[r + 1] - t[r]);
    alpha[r] = h[r] - beta[r] * t[r];
  }
}

double adsr_mean(double t, const EnvelopeFit& fit) {
  const auto k = fit.taus.as_array();
  if (!(t >= 0.0 && t <= static_cast<double>(k[3]))) throw DomainError("adsr_mean: week outside [0, tau_R]");
  const std::array<double, 5> pos{0.0, double(k[0]), double(k[1]), double(k[2]), double(k[3])};
  const std::array<double, 5> h{0.0, fit.nodes[0], fit.nodes[1], fit.nodes[2], 0.0};
  for (int seg = 0; seg < 4; ++seg) {
    if (t <= pos[seg + 1]) return std::max(0.0, line_value(t, pos[seg], h[seg], pos[seg + 1], h[seg + 1]));
  }
  return 0.0;
}

std::vector<double> envelope_curve(const ChangePoints& taus, const std::array<double, 3>& nodes,
                                   std::size_t horizon) {
  const Eigen::VectorXd v = node_basis(taus, horizon) * Eigen::Vector3d(nodes[0], nodes[1], nodes[2]);
  std::vector<double> out(horizon);
  for (std::size_t t = 0; t < horizon; ++t) out[t] = std::max(0.0, v(static_cast<Eigen::Index>(t)));
  return out;
}

double envelope_rss(std::span<const double> y, const ChangePoints& taus) {
  taus.validate(y.size());
  const PrefixSums sums(y);
  const auto T = y.size();
  const SegmentCost first = sums.segment(0, taus.attack);
  Quadratic q{first.B, -2.0 * first.E, first.F + y[0] * y[0]};
  q = extend(q, sums.segment(taus.attack, taus.sustain));
  q = extend(q, sums.segment(taus.sustain, taus.decay));
  return close(q, sums.segment(taus.decay, taus.release), sums.yy(taus.release + 1, T));
}

ChangePoints fit_changepoints(const DemandCurve& curve, const ChangePointConfig& config) {
  const auto y = as_doubles(curve);
  return fit_changepoints(std::span<const double>(y), config);
}

ChangePoints fit_changepoints(std::span<const double> y, const ChangePointConfig& config) {
  const auto T = y.size();
  if (T < 8) throw ConfigurationError("change-point search needs at least 8 weeks");
  const std::size_t g = std::max<std::size_t>(1, config.min_phase_weeks);
  if (3 * g + 1 > T - 1) throw ConfigurationError("horizon too short for the minimum phase length");
  if (is_monotone(y)) {
    throw DegenerateFitError("series is monotone: no interior peak to place four phases; fit fewer phases");
  }
  const PrefixSums sums(y);
  const double tol = 1e-9 * std::max(1.0, sums.yy(0, T));

  // Incumbent bound from a coarse grid, every candidate of which is also
  // visited below, so the exact search can only match or improve on it.
  const std::size_t stride = std::max<std::size_t>(1, T / 40);
  double bound = std::numeric_limits<double>::infinity();
  for (std::size_t a = g; a + 2 * g + 1 <= T - 1; a += stride)
    for (std::size_t s = a + g; s + g + 1 <= T - 1; s += stride)
      for (std::size_t d = s + g; d + 1 <= T - 1; d += stride)
        for (std::size_t r = d + 1; r <= T - 1; r += stride) bound = std::min(bound, envelope_rss(y, {a, s, d, r}));

  bool found = false;
  double best = 0.0;
  ChangePoints best_taus;
  auto hopeless = [&](double lower) { return found ? lower > best - tol : lower > bound + tol; };

  const double y0 = y[0] * y[0];
  for (std::size_t a = g; a + 2 * g + 1 <= T - 1; ++a) {
    const SegmentCost first = sums.segment(0, a);
    const Quadratic q1{first.B, -2.0 * first.E, first.F + y0};
    if (hopeless(q1.minimum())) continue;
    for (std::size_t s = a + g; s + g + 1 <= T - 1; ++s) {
      const Quadratic q2 = extend(q1, sums.segment(a, s));
      if (hopeless(q2.minimum())) continue;
      for (std::size_t d = s + g; d + 1 <= T - 1; ++d) {
        const Quadratic q3 = extend(q2, sums.segment(s, d));
        if (hopeless(q3.minimum())) continue;
        for (std::size_t r = d + 1; r <= T - 1; ++r) {
          const double total = close(q3, sums.segment(d, r), sums.yy(r + 1, T));
          if (!found || total < best - tol) {
            found = true;
            best = total;
            best_taus = {a, s, d, r};
          }
        }
      }
    }
  }
  if (!found) throw DegenerateFitError("no admissible change points");
  return best_taus;
}

std::array<double, 4> changepoint_prior_factors(const ChangePoints& taus, std::size_t horizon) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  const double T = static_cast<double>(horizon);
  if (horizon < 3 || taus.attack < 2 || !taus.ordered(horizon)) return {ninf, ninf, ninf, ninf};
  return {-std::log(T - 2.0), -std::log(T - 1.0 - double(taus.attack)), -std::log(T - 1.0 - double(taus.sustain)),
          -std::log(T - 1.0 - double(taus.decay))};
}

namespace {

// Probability that the unrestricted sequential draw yields a valid chain.
double prior_normalizer(std::size_t horizon) {
  const auto T = horizon;
  if (T < 6) return 0.0;
  // ways[k][t]: mass of completing k more change points after one at t.
  std::vector<double> after(T, 1.0);  // zero more to place
  for (int k = 0; k < 3; ++k) {
    std::vector<double> next(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      if (t + 1 > T - 1) continue;
      const double width = static_cast<double>(T - 1 - t);
      double s = 0.0;
      for (std::size_t u = t + 1; u <= T - 1; ++u) s += after[u];
      next[t] = s / width;
    }
    after = std::move(next);
  }
  double z = 0.0;
  for (std::size_t a = 2; a <= T - 1; ++a) z += after[a];
  return z / static_cast<double>(T - 2);
}

}  // namespace

double changepoint_prior_logpmf(const ChangePoints& taus, std::size_t horizon) {
  const auto f = changepoint_prior_factors(taus, horizon);
  const double sum = f[0] + f[1] + f[2] + f[3];
  if (!std::isfinite(sum)) return -std::numeric_limits<double>::infinity();
  return sum - std::log(prior_normalizer(horizon));
}

ChangePoints sample_changepoint_prior(std::size_t horizon, Rng& rng) {
  if (horizon < 6) throw ConfigurationError("change-point prior needs at least 6 weeks");
  const auto last = static_cast<std::int64_t>(horizon - 1);
  for (;;) {
    const auto a = rng.uniform_int(2, last);
    if (a + 1 > last) continue;
    const auto s = rng.uniform_int(a + 1, last);
    if (s + 1 > last) continue;
    const auto d = rng.uniform_int(s + 1, last);
    if (d + 1 > last) continue;
    const auto r = rng.uniform_int(d + 1, last);
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(s), static_cast<std::size_t>(d),
            static_cast<std::size_t>(r)};
  }
}

std::vector<double> envelope_prediction(const EnvelopeFit& fit, const CovariatePath& covariates) {
  const auto T = covariates.horizon();
  const auto env = envelope_curve(fit.taus, fit.nodes, T);
  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& e = fit.effects[static_cast<int>(phase_of(t, fit.taus))];
    double lin = 0.0;
    if (e.theta.size() > 0) lin += e.theta.dot(covariates.x(t));
    if (e.gamma.size() > 0) lin += e.gamma.dot(covariates.z(t));
    out[t] = env[t] * std::exp(std::clamp(lin, -50.0, 50.0));
  }
  return out;
}

EnvelopeFit fit_partite(const DemandCurve& curve, const ChangePoints& taus, const CovariatePath& covariates,
                        const PartiteOptions& options) {
  curve.validate();
  const auto T = curve.horizon();
  taus.validate(T);
  if (covariates.horizon() != T) throw ConfigurationError("covariates and curve differ in horizon");
  for (int r = 0; r < 4; ++r) {
    const auto [lo, hi] = phase_weeks(static_cast<Phase>(r), taus, T);
    if (hi < lo + 2) {
      throw PhaseSupportError("phase " + std::to_string(r + 1) + " has fewer than two weeks");
    }
  }
  const auto C = static_cast<Eigen::Index>(covariates.channels());
  const auto D = static_cast<Eigen::Index>(covariates.ambient());
  const auto y_std = as_doubles(curve);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_std.data(), static_cast<Eigen::Index>(T));
  const Eigen::MatrixXd basis = node_basis(taus, T);

  EnvelopeFit fit;
  fit.taus = taus;
  fit.horizon = T;
  fit.family = options.family;
  for (auto& e : fit.effects) {
    e.theta = Eigen::VectorXd::Zero(C);
    e.gamma = Eigen::VectorXd::Zero(D);
  }

  Eigen::VectorXd mu = basis.colPivHouseholderQr().solve(y);
  if (options.family == EnvelopeFamily::LeastSquares) {
    fit.nodes = {mu(0), mu(1), mu(2)};
    fit.refresh_lines();
    fit.log_likelihood = -(y - basis * mu).squaredNorm();
    fit.iterations = 1;
    return fit;
  }
  if (y.maxCoeff() <= 0.0) throw DegenerateFitError("all-zero series has no envelope");
  mu = mu.cwiseMax(kMeanFloor);

  auto multipliers = [&]() {
    Eigen::VectorXd m(static_cast<Eigen::Index>(T));
    for (std::size_t t = 0; t < T; ++t) {
      const auto& e = fit.effects[static_cast<int>(phase_of(t, taus))];
      double lin = 0.0;
      if (C > 0) lin += e.theta.dot(covariates.x(t));
      if (D > 0) lin += e.gamma.dot(covariates.z(t));
      m(static_cast<Eigen::Index>(t)) = std::exp(std::clamp(lin, -50.0, 50.0));
    }
    return m;
  };

  double omega = 10.0;
  double ll = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Eigen::VectorXd m = multipliers();
    const Eigen::MatrixXd scaled = m.asDiagonal() * basis;
    mu = identity_link_nodes(scaled, y, omega, mu);

    if (C + D > 0) {
      const Eigen::VectorXd env = basis * mu;
      for (int r = 0; r < 4; ++r) {
        const auto [lo, hi] = phase_weeks(static_cast<Phase>(r), taus, T);
        const auto n = static_cast<Eigen::Index>(hi - lo);
        Eigen::MatrixXd X(n, C + D);
        Eigen::VectorXd off(n), yr(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto t = lo + static_cast<std::size_t>(i);
          X.row(i) << covariates.x(t).transpose(), covariates.z(t).transpose();
          off(i) = std::log(std::max(env(static_cast<Eigen::Index>(t)), kMeanFloor));
          yr(i) = y(static_cast<Eigen::Index>(t));
        }
        Eigen::VectorXd b(C + D);
        b << fit.effects[r].theta, fit.effects[r].gamma;
        b = log_link_effects(X, off, yr, omega, b);
        fit.effects[r].theta = b.head(C);
        fit.effects[r].gamma = b.tail(D);
      }
    }

    const Eigen::VectorXd mean = multipliers().cwiseProduct(basis * mu);
    auto negative = [&](double log_w) { return -negbin_loglik(y, mean, std::exp(log_w)); };
    const auto [log_w, neg_ll] = boost::math::tools::brent_find_minima(negative, std::log(1e-3), std::log(1e6), 40);
    omega = std::exp(log_w);
    const double previous = ll;
    ll = -neg_ll;
    trace.push_back(ll);
    fit.iterations = it;
    if (std::isfinite(previous) && std::abs(ll - previous) <= options.relative_tolerance * std::abs(previous)) break;
  }
  if (!std::isfinite(ll)) throw FitError("partite fit diverged", trace);
  fit.nodes = {mu(0), mu(1), mu(2)};
  fit.dispersion = omega;
  fit.log_likelihood = ll;
  fit.refresh_lines();
  return fit;
}

}  // namespace tunedemand
