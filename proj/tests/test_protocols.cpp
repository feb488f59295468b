#include <gtest/gtest.h>

#include <cmath>

#include "pima/protocols.hpp"

using namespace pima;

namespace {

TrafficModel model(TrafficVariant v, double lambda = 0.0) {
  TrafficModel m;
  m.variant = v;
  m.lambda = lambda;
  return m;
}

// N users, the listed ones holding one packet generated at t = -1.
System loaded(std::size_t n, const std::vector<UserIndex>& busy, TrafficVariant v = TrafficVariant::CorrelatedQueued) {
  const auto m = model(v);
  auto users = System::make_users(m, n);
  for (UserIndex u : busy) users[u].push(Packet{u, -1.0, std::nullopt});
  return System(m, users);
}

// A zero-rate model makes the binomial prior a point mass at 0, so the
// frame-level tests estimate against a Poisson prior instead.
PimaProtocol::PriorSpec poisson(double mean, std::size_t cap) {
  PimaProtocol::PriorSpec p;
  p.kind = PimaProtocol::PriorSpec::Kind::Poisson;
  p.poisson_mean = mean;
  p.poisson_cap = cap;
  return p;
}

ProtocolConfig noiseless() {
  ProtocolConfig c;
  c.noise = NoiseModel{1e-12};
  return c;
}

}  // namespace

TEST(Protocols, CollisionRule) {
  EXPECT_EQ(classify(0), SlotResult::Idle);
  EXPECT_EQ(classify(1), SlotResult::Success);
  EXPECT_EQ(classify(2), SlotResult::Collision);
}

TEST(Protocols, PimaIdleFrame) {
  System sys = loaded(50, {});
  PimaProtocol p(noiseless(), 50);
  Rng rng(1);
  const auto r = p.run_frame(sys, rng);
  EXPECT_EQ(r.estimate, 0u);
  EXPECT_TRUE(r.outcomes.empty());
  EXPECT_DOUBLE_EQ(r.duration, 3.0);
  EXPECT_EQ(sys.ledger().eta().n, 0u);
}

TEST(Protocols, PimaSingleUser) {
  System sys = loaded(50, {17});
  PimaProtocol p(noiseless(), 50, poisson(1.0, 50));
  Rng rng(2);
  const auto r = p.run_frame(sys, rng);
  EXPECT_EQ(r.successes, 1u);
  EXPECT_DOUBLE_EQ(r.duration, 13.0);
  EXPECT_EQ(sys.ledger().delivered(), 1u);
  EXPECT_DOUBLE_EQ(*sys.ledger().latency().mean(), 1.0 + 13.0);
}

TEST(Protocols, PimaOverestimateNeverExceedsActive) {
  ProtocolConfig c;
  c.noise = NoiseModel::from_snr_db(-5.0);  // noisy estimates in both directions
  PimaProtocol p(c, 30, poisson(3.0, 30));
  Rng rng(3);
  bool over = false;
  for (int f = 0; f < 2000; ++f) {
    std::vector<UserIndex> busy;
    for (UserIndex u = 0; u < 30; ++u)
      if (rng.bernoulli(0.1)) busy.push_back(u);
    System sys = loaded(30, busy);
    const auto r = p.run_frame(sys, rng);
    EXPECT_LE(r.successes, r.active);
    over = over || r.estimate > r.active;
    for (const auto& o : r.outcomes) EXPECT_EQ(o.result, classify(o.transmitters.size()));
  }
  EXPECT_TRUE(over);
}

TEST(Protocols, PimaDefersLateArrivals) {
  // only users active at the reservation beacon transmit, each exactly once
  System sys(model(TrafficVariant::CorrelatedQueued, 0.02), 20);
  PimaProtocol p(noiseless(), 20);
  Rng rng(4);
  for (int f = 0; f < 500; ++f) {
    const auto r = p.run_frame(sys, rng);
    std::size_t tx = 0;
    for (const auto& o : r.outcomes) tx += o.transmitters.size();
    EXPECT_EQ(tx, r.slots ? r.active : 0u);
  }
  EXPECT_EQ(sys.ledger().generated(), sys.ledger().delivered() + sys.ledger().dropped() + sys.buffered());
}

TEST(Protocols, TdmaIdleFrame) {
  System sys = loaded(50, {});
  TdmaProtocol t(ProtocolConfig{});
  Rng rng(5);
  const auto r = t.run_frame(sys, rng);
  EXPECT_EQ(r.outcomes.size(), 50u);
  EXPECT_DOUBLE_EQ(r.duration, 500.0);
  for (const auto& o : r.outcomes) EXPECT_EQ(o.result, SlotResult::Idle);
}

TEST(Protocols, TdmaOnePacketPerUserPerFrame) {
  System sys = loaded(10, {3});
  sys.users()[3].push(Packet{3, -0.5, std::nullopt});
  TdmaProtocol t(ProtocolConfig{});
  Rng rng(6);
  const auto r = t.run_frame(sys, rng);
  EXPECT_EQ(r.successes, 1u);
  EXPECT_EQ(sys.users()[3].size(), 1u);
  // slot 4 ends at 40 usd
  EXPECT_DOUBLE_EQ(*sys.ledger().latency().mean(), 41.0);
}

TEST(Protocols, TdmaNeverCollides) {
  System sys(model(TrafficVariant::IidSinglePacket, 0.01), 50);
  TdmaProtocol t(ProtocolConfig{});
  Rng rng(7);
  for (int f = 0; f < 200; ++f) EXPECT_EQ(t.run_frame(sys, rng).collisions, 0u);
}

TEST(Protocols, BacklogUpdate) {
  BacklogEstimate g;
  g.update(SlotResult::Collision, 1.0);
  EXPECT_NEAR(g.g, 1.0 + 1.0 / (M_E - 2.0), 1e-12);
  EXPECT_NEAR(g.g, 2.3922, 1e-4);
  EXPECT_NEAR(g.transmit_probability(), 0.4180, 1e-4);

  BacklogEstimate s;
  s.update(SlotResult::Success, 1.0);
  EXPECT_DOUBLE_EQ(s.g, 1.0);
  EXPECT_DOUBLE_EQ(s.transmit_probability(), 1.0);

  BacklogEstimate big{50.0};
  EXPECT_DOUBLE_EQ(big.transmit_probability(), 0.02);
  big.update(SlotResult::Idle, 0.5);
  EXPECT_DOUBLE_EQ(big.g, 49.5);
}

TEST(Protocols, SalohaCollisionDropsWithoutBackoffInIid) {
  System sys = loaded(5, {0, 1}, TrafficVariant::IidSinglePacket);
  SalohaProtocol s(ProtocolConfig{});
  Rng rng(8);
  const auto o = s.step(sys, rng);
  EXPECT_EQ(o.result, SlotResult::Collision);
  EXPECT_EQ(sys.ledger().dropped(), 2u);
  EXPECT_EQ(sys.buffered(), 0u);
}

TEST(Protocols, SalohaRetainsCollidedPacketsInCorrelated) {
  System sys = loaded(5, {0, 1});
  SalohaProtocol s(ProtocolConfig{});
  Rng rng(9);
  EXPECT_EQ(s.step(sys, rng).result, SlotResult::Collision);
  EXPECT_EQ(sys.buffered(), 2u);
  EXPECT_GT(s.backlog().g, 1.0);
  for (int k = 0; k < 200 && sys.buffered(); ++k) s.step(sys, rng);
  EXPECT_EQ(sys.ledger().delivered(), 2u);
}

TEST(Protocols, Cra2DedicatedPreamblesNoMisdetection) {
  System sys = loaded(50, {1, 9, 20, 33});
  ProtocolConfig c;
  c.preambles = 50;
  c.p_md = 0.0;
  Cra2Protocol p(c);
  Rng rng(10);
  const auto r = p.run_frame(sys, rng);
  EXPECT_EQ(r.successes, 4u);
  EXPECT_EQ(r.collisions, 0u);
  EXPECT_DOUBLE_EQ(r.duration, 50 + 4 + 40);
}

TEST(Protocols, Cra2SharedPreambleCollides) {
  ProtocolConfig c;
  c.preambles = 25;
  c.p_md = 0.0;
  Cra2Protocol p(c);
  Rng rng(11);
  // two users alone: they collide exactly when they draw the same preamble
  int same = 0, coll = 0;
  for (int t = 0; t < 20000; ++t) {
    System sys = loaded(50, {4, 7});
    const auto r = p.run_frame(sys, rng);
    coll += r.collisions;
    same += r.slots == 1;
  }
  EXPECT_EQ(coll, same);
  EXPECT_NEAR(same / 20000.0, 1.0 / 25, 4 * std::sqrt(0.04 * 0.96 / 20000));
}

TEST(Protocols, Cra2DetectedPreambleOccupancy) {
  ProtocolConfig c;
  c.preambles = 25;
  c.p_md = 0.1;
  Cra2Protocol p(c);
  Rng rng(12);
  constexpr int kTrials = 1000000;
  double s = 0, s2 = 0;
  const auto m = model(TrafficVariant::CorrelatedQueued);
  auto users = System::make_users(m, 50);
  for (UserIndex u : {0u, 1u, 2u, 3u}) users[u].push(Packet{u, -1.0, std::nullopt});
  for (int t = 0; t < kTrials; ++t) {
    System sys(m, users);
    const double d = static_cast<double>(p.run_frame(sys, rng).slots);
    s += d;
    s2 += d * d;
  }
  const double mean = s / kTrials;
  const double se = std::sqrt((s2 / kTrials - mean * mean) / kTrials);
  const double expect = 25.0 * (1.0 - std::pow(24.0 / 25.0, 4)) * 0.9;
  EXPECT_NEAR(mean, expect, 3 * se);
}

TEST(Protocols, SameSeedSameTrace) {
  auto trace = [] {
    System sys(model(TrafficVariant::CorrelatedQueued, 0.003), 50);
    PimaProtocol p(ProtocolConfig{}, 50);
    Rng rng(99);
    std::vector<std::size_t> out;
    for (int f = 0; f < 300; ++f) {
      const auto r = p.run_frame(sys, rng);
      out.push_back(r.estimate * 1000 + r.successes);
    }
    return out;
  };
  EXPECT_EQ(trace(), trace());
}

TEST(Protocols, ConfigValidation) {
  ProtocolConfig c;
  c.preambles = 0;
  EXPECT_THROW(Cra2Protocol{c}, std::invalid_argument);
  c = ProtocolConfig{};
  c.p_md = 1.5;
  EXPECT_THROW(TdmaProtocol{c}, std::invalid_argument);
  EXPECT_EQ(parse_count_detector("magnitude"), CountDetector::Magnitude);
  EXPECT_THROW(parse_count_detector("ml"), std::invalid_argument);
}
