#pragma once

// Counting active users from a single superposed activity symbol.
//
// Every active user inverts its channel, so the base station observes the
// active count plus complex AWGN of total variance sigma_w^2. Decisions use
// the real part, whose noise variance is sigma_w^2 / 2. The likelihood of
// count b is then proportional to exp(-(y - b)^2 / sigma_w^2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <stdexcept>
#include <vector>

#include "pima/rng.hpp"

namespace pima {

/// Upper tail of the standard normal distribution.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

struct NoiseModel {
  double sigma_w_sq = 0.1;

  static NoiseModel from_snr_db(double snr_db) { return NoiseModel{std::pow(10.0, -snr_db / 10.0)}; }

  double snr_db() const { return -10.0 * std::log10(sigma_w_sq); }
  /// Standard deviation of the real-axis observation noise.
  double real_stddev() const { return std::sqrt(sigma_w_sq / 2.0); }
};

struct ActivePrior {
  std::vector<double> pmf;      ///< p(b) for b = 0..N
  std::vector<double> log_pmf;  ///< optional ln p(b); keeps tails that underflow pmf

  std::size_t population() const { return pmf.empty() ? 0 : pmf.size() - 1; }

  double log_p(std::size_t b) const {
    if (!log_pmf.empty()) return log_pmf[b];
    return pmf[b] > 0.0 ? std::log(pmf[b]) : -std::numeric_limits<double>::infinity();
  }

  void validate() const {
    if (pmf.empty()) throw std::invalid_argument("prior must cover at least b = 0");
    double sum = 0.0;
    for (double p : pmf) {
      if (!(p >= 0.0)) throw std::invalid_argument("prior entries must be nonnegative");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw std::invalid_argument("prior must sum to one");
    if (!log_pmf.empty() && log_pmf.size() != pmf.size())
      throw std::invalid_argument("log prior must match the prior length");
  }
};

struct EnumObservation {
  double y = 0.0;
};

/// Decision regions of the MAP count estimator.
///
/// `deltas[b]` is the pairwise threshold offset between b and b + 1 as seen
/// from b. `upper[b]` is the upper edge of the region of b; region b is
/// [upper[b-1], upper[b]) with upper[-1] = -inf and upper[N] = +inf. Edges
/// are nondecreasing, and equal consecutive edges mean an empty region.
struct DecisionRegions {
  std::vector<double> deltas;
  std::vector<double> upper;

  std::size_t population() const { return upper.size(); }

  double lower_edge(std::size_t b) const {
    return b == 0 ? -std::numeric_limits<double>::infinity() : upper[b - 1];
  }
  double upper_edge(std::size_t b) const {
    return b >= upper.size() ? std::numeric_limits<double>::infinity() : upper[b];
  }
  bool empty_region(std::size_t b) const { return !(lower_edge(b) < upper_edge(b)); }
};

/// y = nu + g with g ~ N(0, sigma_w^2 / 2).
inline EnumObservation observe(std::size_t nu, const NoiseModel& noise, Rng& rng) {
  return EnumObservation{static_cast<double>(nu) + noise.real_stddev() * rng.normal()};
}

inline double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

namespace detail {

// Fills pmf and log_pmf from unnormalized log weights.
inline ActivePrior prior_from_logs(std::vector<double> logs) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logs) top = std::max(top, v);
  double sum = 0.0;
  for (double v : logs) sum += std::exp(v - top);
  const double norm = top + std::log(sum);
  ActivePrior prior;
  prior.pmf.resize(logs.size());
  for (std::size_t b = 0; b < logs.size(); ++b) {
    logs[b] -= norm;
    prior.pmf[b] = std::exp(logs[b]);
  }
  prior.log_pmf = std::move(logs);
  return prior;
}

}  // namespace detail

/// Binomial law of the active count when each of N users has received at
/// least one Poisson(lambda) arrival within t_a.
inline ActivePrior iid_prior(std::size_t population, double lambda, double t_a) {
  if (population < 1) throw std::invalid_argument("population must be at least 1");
  if (!(lambda >= 0.0) || !(t_a >= 0.0)) throw std::invalid_argument("rate and window must be nonnegative");
  const double p = -std::expm1(-lambda * t_a);
  ActivePrior prior{std::vector<double>(population + 1, 0.0), {}};
  if (p <= 0.0) {
    prior.pmf[0] = 1.0;
    return prior;
  }
  if (p >= 1.0) {
    prior.pmf[population] = 1.0;
    return prior;
  }
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  std::vector<double> logs(population + 1);
  for (std::size_t b = 0; b <= population; ++b) {
    logs[b] = log_binomial(population, b) + static_cast<double>(b) * lp + static_cast<double>(population - b) * lq;
  }
  return detail::prior_from_logs(std::move(logs));
}

/// Poisson(mean) law truncated to 0..cap and renormalized.
inline ActivePrior poisson_prior(double mean, std::size_t cap) {
  if (!(mean >= 0.0)) throw std::invalid_argument("mean must be nonnegative");
  ActivePrior prior{std::vector<double>(cap + 1, 0.0), {}};
  if (mean == 0.0) {
    prior.pmf[0] = 1.0;
    return prior;
  }
  const double lm = std::log(mean);
  std::vector<double> logs(cap + 1);
  for (std::size_t b = 0; b <= cap; ++b) {
    logs[b] = static_cast<double>(b) * lm - std::lgamma(static_cast<double>(b) + 1.0);
  }
  return detail::prior_from_logs(std::move(logs));
}

/// MAP decision regions for the given prior.
///
/// Adjacent thresholds follow delta_b = 1/2 + (sigma_w^2/2) ln(p(b)/p(b+1)).
/// When those are not monotone (or a prior entry is zero) the region edges
/// come from the upper envelope of the per-hypothesis log-posterior lines,
/// which is exactly the argmax decision rule.
inline DecisionRegions decision_regions(const ActivePrior& prior, const NoiseModel& noise) {
  const std::size_t n = prior.population();
  const double inf = std::numeric_limits<double>::infinity();
  const double s2 = noise.sigma_w_sq;

  DecisionRegions out;
  out.deltas.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double lb = prior.log_p(b);
    const double ln = prior.log_p(b + 1);
    if (ln == -inf) {
      out.deltas[b] = inf;
    } else if (lb == -inf) {
      out.deltas[b] = -inf;
    } else {
      out.deltas[b] = 0.5 + 0.5 * s2 * (lb - ln);
    }
  }

  // log p(b) - (y - b)^2 / s2 = const(y) + slope_b * y + icpt_b, slopes increasing in b
  auto icpt = [&](std::size_t b) { return prior.log_p(b) - static_cast<double>(b) * static_cast<double>(b) / s2; };
  auto cross = [&](std::size_t a, std::size_t c) {
    // y where lines a < c meet
    return (icpt(a) - icpt(c)) * s2 / (2.0 * static_cast<double>(c - a));
  };

  std::vector<std::size_t> hull;
  std::vector<double> from;  // y at which hull[i] takes over
  for (std::size_t b = 0; b <= n; ++b) {
    if (prior.log_p(b) == -inf) continue;
    while (!hull.empty()) {
      const double x = cross(hull.back(), b);
      if (hull.size() > 1 && x <= from.back()) {
        hull.pop_back();
        from.pop_back();
        continue;
      }
      hull.push_back(b);
      from.push_back(x);
      break;
    }
    if (hull.empty()) {
      hull.push_back(b);
      from.push_back(-inf);
    }
  }

  out.upper.assign(n, inf);
  std::size_t b = 0;
  for (; b < hull.front() && b < n; ++b) out.upper[b] = -inf;
  for (std::size_t i = 0; i + 1 < hull.size(); ++i) {
    for (b = hull[i]; b < hull[i + 1]; ++b) out.upper[b] = from[i + 1];
  }
  return out;
}

/// MAP estimate of the active count: the b whose region contains y.
inline std::size_t map_estimate(EnumObservation obs, const DecisionRegions& regions) {
  const auto& u = regions.upper;
  // first edge strictly above y
  std::size_t lo = 0, hi = u.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (u[mid] <= obs.y) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// Complex observation y = nu + w with w ~ CN(0, sigma_w^2).
struct ComplexObservation {
  double re = 0.0;
  double im = 0.0;
};

inline ComplexObservation observe_complex(std::size_t nu, const NoiseModel& noise, Rng& rng) {
  const double sd = noise.real_stddev();
  const double re = static_cast<double>(nu) + sd * rng.normal();
  return ComplexObservation{re, sd * rng.normal()};
}

/// Prior-free count detector: nearest integer to |y|, capped at max_count.
/// Idle frames are misread as active with probability exp(-1 / (4 sigma_w^2)).
inline std::size_t magnitude_estimate(ComplexObservation obs, std::size_t max_count) {
  const double r = std::floor(std::hypot(obs.re, obs.im) + 0.5);
  if (r >= static_cast<double>(max_count)) return max_count;
  return static_cast<std::size_t>(r);
}

/// Probability that the estimate differs from b when b users are active.
inline double error_probability(std::size_t b, const DecisionRegions& regions, const NoiseModel& noise) {
  if (b > regions.population()) throw std::out_of_range("count exceeds population");
  if (regions.empty_region(b)) return 1.0;
  const double sd = noise.real_stddev();
  const double up = regions.upper_edge(b) - static_cast<double>(b);
  const double down = static_cast<double>(b) - regions.lower_edge(b);
  double pe = 0.0;
  if (std::isfinite(up)) pe += q_function(up / sd);
  if (std::isfinite(down)) pe += q_function(down / sd);
  return pe;
}

}  // namespace pima
