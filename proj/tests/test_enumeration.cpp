#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pima/enumeration.hpp"
#include "support/oracles.hpp"

using namespace pima;

namespace {

ActivePrior uniform(std::size_t n) { return ActivePrior{std::vector<double>(n + 1, 1.0 / (n + 1)), {}}; }

const NoiseModel k10dB = NoiseModel::from_snr_db(10.0);

}  // namespace

TEST(Enumeration, NoiselessObservation) {
  Rng rng(1);
  EXPECT_DOUBLE_EQ(observe(7, NoiseModel{1e-300}, rng).y, 7.0);
}

TEST(Enumeration, NoiseMoments) {
  Rng rng(2);
  constexpr int kDraws = 1000000;
  double s = 0, s2 = 0;
  for (int i = 0; i < kDraws; ++i) {
    const double y = observe(0, k10dB, rng).y;
    s += y;
    s2 += y * y;
  }
  const double mean = s / kDraws;
  EXPECT_NEAR(mean, 0.0, 0.001);
  EXPECT_NEAR(s2 / kDraws - mean * mean, 0.05, 0.001);
  EXPECT_DOUBLE_EQ(k10dB.sigma_w_sq, 0.1);
}

TEST(Enumeration, BinomialPrior) {
  const auto zero = iid_prior(5, 0.0, 10.0);
  EXPECT_EQ(zero.pmf[0], 1.0);
  for (std::size_t b = 1; b <= 5; ++b) EXPECT_EQ(zero.pmf[b], 0.0);

  const auto half = iid_prior(2, std::log(2.0), 1.0);  // p = 1 - e^{-ln 2} = 0.5
  EXPECT_NEAR(half.pmf[0], 0.25, 1e-15);
  EXPECT_NEAR(half.pmf[1], 0.5, 1e-15);
  EXPECT_NEAR(half.pmf[2], 0.25, 1e-15);

  const auto p = iid_prior(50, 0.1, 1.0);
  EXPECT_NEAR(std::accumulate(p.pmf.begin(), p.pmf.end(), 0.0), 1.0, 1e-12);
  EXPECT_EQ(std::max_element(p.pmf.begin(), p.pmf.end()) - p.pmf.begin(), 4);
  EXPECT_NO_THROW(p.validate());
}

TEST(Enumeration, PoissonPriorKeepsFarTail) {
  const auto p = poisson_prior(1e4, 11220);
  EXPECT_EQ(p.pmf[100], 0.0);  // underflows as a probability
  EXPECT_TRUE(std::isfinite(p.log_p(100)));
  const auto reg = decision_regions(p, k10dB);
  EXPECT_EQ(map_estimate({100.1}, reg), 100u);
}

TEST(Enumeration, UniformPriorThresholdsAreHalf) {
  const auto reg = decision_regions(uniform(10), k10dB);
  for (std::size_t b = 0; b < 10; ++b) {
    EXPECT_DOUBLE_EQ(reg.deltas[b], 0.5);
    EXPECT_NEAR(reg.upper[b], b + 0.5, 1e-12);
  }
}

TEST(Enumeration, PriorRatioShiftsThreshold) {
  // p(0)/p(1) = e
  ActivePrior p{{std::exp(1.0) / (1 + std::exp(1.0)), 1.0 / (1 + std::exp(1.0))}, {}};
  const auto reg = decision_regions(p, k10dB);
  EXPECT_NEAR(reg.deltas[0], 0.55, 1e-12);
  EXPECT_NEAR(reg.upper[0], 0.55, 1e-12);
}

TEST(Enumeration, ZeroPriorNeverChosen) {
  ActivePrior p{{0.5, 0.0, 0.5}, {}};
  const auto reg = decision_regions(p, k10dB);
  EXPECT_TRUE(reg.empty_region(1));
  for (double y = -2; y < 4; y += 0.01) EXPECT_NE(map_estimate({y}, reg), 1u);
  EXPECT_EQ(error_probability(1, reg, k10dB), 1.0);
}

TEST(Enumeration, MapExamples) {
  const auto reg = decision_regions(uniform(10), k10dB);
  EXPECT_EQ(map_estimate({2.3}, reg), 2u);
  EXPECT_EQ(map_estimate({-5.0}, reg), 0u);
  EXPECT_EQ(map_estimate({99.0}, reg), 10u);
}

TEST(Enumeration, MapMatchesBruteForceArgmax) {
  Rng rng(3);
  const std::vector<ActivePrior> priors{iid_prior(50, 1e-3, 13.0), iid_prior(50, 0.05, 3.0), uniform(50),
                                        poisson_prior(20.0, 80), ActivePrior{{0.3, 0.0, 0.1, 0.6}, {}}};
  const std::vector<NoiseModel> noises{k10dB, NoiseModel::from_snr_db(0.0), NoiseModel::from_snr_db(20.0)};
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000000; ++t) {
    const auto& prior = priors[t % priors.size()];
    const auto& noise = noises[(t / priors.size()) % noises.size()];
    thread_local std::vector<DecisionRegions> cache;
    if (cache.empty())
      for (const auto& n : noises)
        for (const auto& p : priors) cache.push_back(decision_regions(p, n));
    const auto& reg = cache[((t / priors.size()) % noises.size()) * priors.size() + t % priors.size()];
    const std::size_t nu = rng.below(prior.population() + 1);
    const double y = observe(nu, noise, rng).y;
    std::vector<double> logp(prior.population() + 1);
    for (std::size_t b = 0; b < logp.size(); ++b) logp[b] = prior.log_p(b);
    if (map_estimate({y}, reg) != oracle::brute_map(y, logp, noise.sigma_w_sq)) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Enumeration, ConstantLogShiftInvariance) {
  auto p = iid_prior(30, 0.01, 20.0);
  ActivePrior shifted = p;
  for (double& v : shifted.log_pmf) v += 17.0;
  const auto a = decision_regions(p, k10dB);
  const auto b = decision_regions(shifted, k10dB);
  for (std::size_t i = 0; i < a.upper.size(); ++i) EXPECT_NEAR(a.upper[i], b.upper[i], 1e-9);
}

TEST(Enumeration, ErrorProbability) {
  const auto reg = decision_regions(uniform(10), k10dB);
  const double expect = 2.0 * oracle::normal_tail(0.5 / std::sqrt(0.05));
  EXPECT_NEAR(expect, 0.0254, 1e-4);  // 0.025347, quoted to three figures
  for (std::size_t b = 1; b < 10; ++b) EXPECT_NEAR(error_probability(b, reg, k10dB), expect, 1e-12);
  EXPECT_NEAR(error_probability(0, reg, k10dB), expect / 2, 1e-12);
  EXPECT_LT(error_probability(5, decision_regions(uniform(10), NoiseModel{1e-4}), NoiseModel{1e-4}), 1e-100);
}

TEST(Enumeration, ErrorProbabilityMonteCarlo) {
  const auto prior = iid_prior(50, 0.02, 10.0);
  const auto reg = decision_regions(prior, k10dB);
  Rng rng(4);
  constexpr int kTrials = 1000000;
  for (std::size_t b : {3u, 6u}) {
    int err = 0;
    for (int t = 0; t < kTrials; ++t) err += map_estimate(observe(b, k10dB, rng), reg) != b;
    const double pe = error_probability(b, reg, k10dB);
    EXPECT_NEAR(static_cast<double>(err) / kTrials, pe, 3.0 * std::sqrt(pe * (1 - pe) / kTrials)) << "b=" << b;
  }
  // prior-weighted correct rate
  int correct = 0;
  double analytic = 0;
  for (std::size_t b = 0; b <= 50; ++b) analytic += prior.pmf[b] * (1.0 - error_probability(b, reg, k10dB));
  for (int t = 0; t < kTrials; ++t) {
    double u = rng.uniform();
    std::size_t b = 0;
    while (b < 50 && u >= prior.pmf[b]) u -= prior.pmf[b++];
    correct += map_estimate(observe(b, k10dB, rng), reg) == b;
  }
  EXPECT_NEAR(static_cast<double>(correct) / kTrials, analytic,
              3.0 * std::sqrt(analytic * (1 - analytic) / kTrials) + 1e-6);
}

TEST(Enumeration, ThresholdsFlattenForLargePopulation) {
  // lambda * T_a fixed: over the bulk of the prior (mean +- 3 sd) the
  // thresholds approach 1/2 as N grows
  auto bulk_spread = [](std::size_t n) {
    const double p = -std::expm1(-0.5);
    const double mean = n * p, sd = std::sqrt(n * p * (1 - p));
    const auto reg = decision_regions(iid_prior(n, 0.5, 1.0), k10dB);
    double worst = 0;
    for (auto b = static_cast<std::size_t>(std::max(0.0, mean - 3 * sd)); b < std::min<double>(n, mean + 3 * sd); ++b)
      worst = std::max(worst, std::fabs(reg.deltas[b] - 0.5));
    return worst;
  };
  EXPECT_LT(bulk_spread(1000), bulk_spread(100));
  EXPECT_LT(bulk_spread(100), bulk_spread(20));
  EXPECT_LT(bulk_spread(1000), 0.01);
}

TEST(Enumeration, MagnitudeDetectorFalseAlarmRate) {
  Rng rng(5);
  int alarms = 0;
  constexpr int kTrials = 1000000;
  for (int t = 0; t < kTrials; ++t) alarms += magnitude_estimate(observe_complex(0, k10dB, rng), 50) > 0;
  const double expect = std::exp(-0.25 / 0.1);
  EXPECT_NEAR(static_cast<double>(alarms) / kTrials, expect, 3.0 * std::sqrt(expect * (1 - expect) / kTrials));
  EXPECT_EQ(magnitude_estimate({1e9, 0}, 50), 50u);
}
