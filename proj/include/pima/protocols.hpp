#pragma once

// Frame-level state machines for PIMA and the baselines (TDMA, stabilized
// slotted ALOHA, CRA-2) over a collision channel: a slot succeeds iff exactly
// one user transmits in it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pima/enumeration.hpp"
#include "pima/metrics.hpp"
#include "pima/rng.hpp"
#include "pima/scheduling.hpp"
#include "pima/traffic.hpp"

namespace pima {

enum class SlotResult { Idle, Success, Collision };

inline SlotResult classify(std::size_t transmitters) {
  if (transmitters == 0) return SlotResult::Idle;
  return transmitters == 1 ? SlotResult::Success : SlotResult::Collision;
}

struct SlotOutcome {
  std::size_t slot_index = 0;  ///< 1-based within the DT sub-frame
  std::vector<UserIndex> transmitters;
  SlotResult result = SlotResult::Idle;

  std::optional<UserIndex> owner() const {
    if (result != SlotResult::Success) return std::nullopt;
    return transmitters.front();
  }
};

struct FrameReport {
  std::vector<SlotOutcome> outcomes;
  Usd duration = 0.0;
  std::size_t active = 0;    ///< users with a buffered packet at frame start
  std::size_t estimate = 0;  ///< estimated or detected active count
  std::size_t slots = 0;     ///< data slots in the frame
  std::size_t successes = 0;
  std::size_t collisions = 0;
};

/// User buffers, their arrival processes and the simulation clock.
///
/// Arrivals are drawn lazily per user: before a user's buffer is inspected at
/// time t, its Poisson process is advanced over [synced_until, t). Disjoint
/// windows of a Poisson process are independent, so the result does not
/// depend on how time is partitioned.
class System {
 public:
  System(TrafficModel model, std::vector<UserState> users, Usd start = 0.0)
      : model_(model), users_(std::move(users)), synced_(users_.size(), start), clock_(start) {
    model_.validate();
  }

  System(TrafficModel model, std::size_t population, Usd start = 0.0)
      : System(model, make_users(model, population), start) {}

  static std::vector<UserState> make_users(const TrafficModel& model, std::size_t population) {
    std::vector<UserState> users;
    users.reserve(population);
    for (std::size_t n = 0; n < population; ++n) users.emplace_back(static_cast<UserIndex>(n), model.buffer_capacity());
    return users;
  }

  const TrafficModel& model() const { return model_; }
  std::size_t population() const { return users_.size(); }
  std::vector<UserState>& users() { return users_; }
  const std::vector<UserState>& users() const { return users_; }
  Usd clock() const { return clock_; }
  void advance_clock(Usd dt) { clock_ += dt; }
  MetricsLedger& ledger() { return ledger_; }
  const MetricsLedger& ledger() const { return ledger_; }

  /// Brings user n's buffer up to time t.
  void sync(std::size_t n, Usd t, Rng& rng) {
    if (t <= synced_[n]) return;
    UserState& u = users_[n];
    const std::size_t before = u.size();
    const std::size_t dropped = generate_arrivals(model_, u, Window{synced_[n], t}, rng);
    synced_[n] = t;
    ledger_.record_generated(u.size() - before + dropped);
    ledger_.record_dropped(dropped);
  }

  void sync_all(Usd t, Rng& rng) {
    for (std::size_t n = 0; n < users_.size(); ++n) sync(n, t, rng);
  }

  /// Removes user n's head packet as delivered at time t.
  void deliver(std::size_t n, Usd t) {
    Packet p = pop_for_transmission(users_[n]);
    p.delivered_at = t;
    ledger_.record_delivery(p.latency());
  }

  /// Resolves a collision: the colliding heads are discarded when the traffic
  /// model forbids retransmission and stay queued otherwise.
  void collide(std::size_t n) {
    if (model_.retransmissions()) return;
    pop_for_transmission(users_[n]);
    ledger_.record_dropped();
  }

  std::uint64_t buffered() const {
    std::uint64_t b = 0;
    for (const auto& u : users_) b += u.size();
    return b;
  }

 private:
  TrafficModel model_;
  std::vector<UserState> users_;
  std::vector<Usd> synced_;
  Usd clock_;
  MetricsLedger ledger_;
};

enum class Protocol { PIMA, TDMA, SALOHA, CRA2 };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::PIMA: return "PIMA";
    case Protocol::TDMA: return "TDMA";
    case Protocol::SALOHA: return "SALOHA";
    case Protocol::CRA2: return "CRA2";
  }
  return "?";
}

/// How PIMA turns the activity symbol into an active-count estimate.
enum class CountDetector {
  Map,        ///< real part, MAP with the configured prior
  Magnitude,  ///< nearest integer to |y|, no prior
};

inline std::string to_string(CountDetector d) { return d == CountDetector::Map ? "map" : "magnitude"; }

inline CountDetector parse_count_detector(const std::string& s) {
  if (s == "map") return CountDetector::Map;
  if (s == "magnitude") return CountDetector::Magnitude;
  throw std::invalid_argument("unknown detector '" + s + "' (expected map or magnitude)");
}

struct ProtocolConfig {
  Protocol variant = Protocol::PIMA;
  Usd slot_usd = 10.0;         ///< T_s
  std::size_t preambles = 50;  ///< M_p, CRA-2
  double p_md = 0.1;           ///< preamble misdetection probability, CRA-2
  std::size_t sequences = 64;  ///< J, PIMA
  Usd pia_overhead_usd = 3.0;  ///< L1, PIMA
  ScheduleMode mode = ScheduleMode::Finite;
  NoiseModel noise = NoiseModel::from_snr_db(10.0);
  bool implicit_population = false;  ///< bursty: users are not indexed 0..N-1
  CountDetector detector = CountDetector::Map;  ///< PIMA
  bool eta_counts_overhead = false;             ///< PIMA: efficiency over L2 + L1/T_s slots

  void validate() const {
    if (!(slot_usd > 0.0)) throw std::invalid_argument("slot length must be positive");
    if (!(p_md >= 0.0 && p_md <= 1.0)) throw std::invalid_argument("misdetection probability must be in [0, 1]");
    if (preambles < 1) throw std::invalid_argument("need at least one preamble");
    if (sequences < 1) throw std::invalid_argument("need at least one scheduling sequence");
    if (!(noise.sigma_w_sq > 0.0)) throw std::invalid_argument("noise variance must be positive");
  }
};

namespace detail {

// Plays one data slot: syncs each transmitter to the slot start, applies the
// collision rule and updates buffers.
inline SlotOutcome play_slot(System& sys, std::size_t index, std::vector<UserIndex> tx, Usd start, Usd slot_usd,
                             Rng& rng, FrameReport& report) {
  for (UserIndex n : tx) sys.sync(n, start, rng);
  SlotOutcome o{index, std::move(tx), SlotResult::Idle};
  o.result = classify(o.transmitters.size());
  if (o.result == SlotResult::Success) {
    sys.deliver(o.transmitters.front(), start + slot_usd);
    ++report.successes;
  } else if (o.result == SlotResult::Collision) {
    for (UserIndex n : o.transmitters) sys.collide(n);
    ++report.collisions;
  }
  return o;
}

}  // namespace detail

/// Prior of the PIMA count estimator: binomial over the N users (observation
/// window = previous frame) or Poisson over burst sizes, truncated at a cap.
struct EstimatorPrior {
  enum class Kind { Binomial, Poisson };
  Kind kind = Kind::Binomial;
  double poisson_mean = 0.0;
  std::size_t poisson_cap = 0;
};

/// PIMA. Each frame: count the active users from one superposed symbol,
/// size the DT sub-frame for the estimate and let every user that was active
/// at the request beacon send its head packet in its scheduled slot.
class PimaProtocol {
 public:
  using PriorSpec = EstimatorPrior;

  PimaProtocol(ProtocolConfig cfg, std::size_t population, PriorSpec prior = PriorSpec{})
      : cfg_(cfg), population_(population), prior_spec_(prior), previous_duration_(cfg.pia_overhead_usd) {
    cfg_.validate();
    if (cfg_.implicit_population) {
      pool_ = SequencePool::implicit_population(cfg_.sequences);
    } else {
      pool_ = SequencePool::permutations(population_, cfg_.sequences);
    }
    if (cfg_.mode == ScheduleMode::Finite) table_.emplace(population_);
    if (prior_spec_.kind == PriorSpec::Kind::Poisson) {
      cached_regions_ = decision_regions(poisson_prior(prior_spec_.poisson_mean, prior_spec_.poisson_cap), cfg_.noise);
    }
  }

  const ProtocolConfig& config() const { return cfg_; }
  const L2Table* table() const { return table_ ? &*table_ : nullptr; }

  /// Decision regions used for the next frame. With the binomial prior the
  /// observation window is the duration of the previous frame.
  const DecisionRegions& regions(double lambda) {
    if (prior_spec_.kind == PriorSpec::Kind::Binomial &&
        (!cached_regions_ || cached_window_ != previous_duration_ || cached_lambda_ != lambda)) {
      cached_regions_ = decision_regions(iid_prior(population_, lambda, previous_duration_), cfg_.noise);
      cached_window_ = previous_duration_;
      cached_lambda_ = lambda;
    }
    return *cached_regions_;
  }

  FrameReport run_frame(System& sys, Rng& rng) {
    FrameReport r;
    const Usd t0 = sys.clock();
    sys.sync_all(t0, rng);
    const std::vector<UserIndex> active = active_set(sys.users());
    r.active = active.size();

    if (cfg_.detector == CountDetector::Map) {
      r.estimate = map_estimate(observe(r.active, cfg_.noise, rng), regions(sys.model().lambda));
    } else {
      const std::size_t cap = cfg_.implicit_population ? std::numeric_limits<std::uint32_t>::max() : population_;
      r.estimate = magnitude_estimate(observe_complex(r.active, cfg_.noise, rng), cap);
    }

    const FrameSchedule sched = build_schedule(r.estimate, cfg_.mode, *pool_, table(), rng, cfg_.pia_overhead_usd);
    r.slots = sched.slots;
    if (r.slots > 0) {
      std::vector<std::vector<UserIndex>> by_slot(r.slots);
      for (UserIndex n : active) by_slot[sched.slot_of(sys.users()[n].id())].push_back(n);
      r.outcomes.reserve(r.slots);
      for (std::size_t l = 0; l < r.slots; ++l) {
        const Usd start = t0 + sched.overhead_usd + static_cast<double>(l) * cfg_.slot_usd;
        r.outcomes.push_back(detail::play_slot(sys, l + 1, std::move(by_slot[l]), start, cfg_.slot_usd, rng, r));
      }
    }
    r.duration = sched.overhead_usd + static_cast<double>(r.slots) * cfg_.slot_usd;
    const double frame_slots = cfg_.eta_counts_overhead ? r.duration / cfg_.slot_usd : static_cast<double>(r.slots);
    sys.ledger().record_frame(r.successes, frame_slots, r.estimate);
    sys.advance_clock(r.duration);
    previous_duration_ = r.duration;
    return r;
  }

 private:
  ProtocolConfig cfg_;
  std::size_t population_;
  PriorSpec prior_spec_;
  std::optional<SequencePool> pool_;
  std::optional<L2Table> table_;
  Usd previous_duration_;
  std::optional<DecisionRegions> cached_regions_;
  double cached_window_ = -1.0;
  double cached_lambda_ = -1.0;
};

/// TDMA: N slots per frame, slot n dedicated to user n. A user transmits its
/// head packet if one is buffered when its slot starts.
class TdmaProtocol {
 public:
  explicit TdmaProtocol(ProtocolConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  FrameReport run_frame(System& sys, Rng& rng) {
    FrameReport r;
    const Usd t0 = sys.clock();
    const std::size_t n_users = sys.population();
    r.slots = n_users;
    r.outcomes.reserve(n_users);
    for (std::size_t n = 0; n < n_users; ++n) {
      const Usd start = t0 + static_cast<double>(n) * cfg_.slot_usd;
      sys.sync(n, start, rng);
      std::vector<UserIndex> tx;
      if (sys.users()[n].active()) {
        tx.push_back(static_cast<UserIndex>(n));
        ++r.active;
      }
      r.outcomes.push_back(detail::play_slot(sys, n + 1, std::move(tx), start, cfg_.slot_usd, rng, r));
    }
    r.estimate = r.active;
    r.duration = static_cast<double>(n_users) * cfg_.slot_usd;
    sys.ledger().record_frame(r.successes, static_cast<double>(n_users), r.estimate);
    sys.advance_clock(r.duration);
    return r;
  }

 private:
  ProtocolConfig cfg_;
};

/// Pseudo-Bayesian backlog estimate of stabilized slotted ALOHA.
///
/// A backlogged user transmits with probability min(1, 1/G). After a
/// collision G grows by N*theta + 1/(e-2); after an idle or successful slot it
/// becomes max(N*theta, G + N*theta - 1).
struct BacklogEstimate {
  double g = 0.0;

  double transmit_probability() const { return g <= 1.0 ? 1.0 : 1.0 / g; }

  void update(SlotResult result, double arrivals_per_slot) {
    if (result == SlotResult::Collision) {
      g = g + arrivals_per_slot + 1.0 / (M_E - 2.0);
    } else {
      g = std::max(arrivals_per_slot, g + arrivals_per_slot - 1.0);
    }
  }
};

/// Stabilized slotted ALOHA. Without retransmissions every user sends as soon
/// as it holds a packet and collided packets are lost.
class SalohaProtocol {
 public:
  explicit SalohaProtocol(ProtocolConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const BacklogEstimate& backlog() const { return backlog_; }

  /// One slot starting at the current clock.
  SlotOutcome step(System& sys, Rng& rng) {
    const Usd t = sys.clock();
    const std::size_t n_users = sys.population();
    const bool backoff = sys.model().retransmissions();
    const double alpha = backoff ? backlog_.transmit_probability() : 1.0;
    std::vector<UserIndex> tx;
    for (std::size_t n = 0; n < n_users; ++n) {
      sys.sync(n, t, rng);
      if (!sys.users()[n].active()) continue;
      if (alpha >= 1.0 || rng.bernoulli(alpha)) tx.push_back(static_cast<UserIndex>(n));
    }
    FrameReport r;
    SlotOutcome o = detail::play_slot(sys, 1, std::move(tx), t, cfg_.slot_usd, rng, r);
    // theta = 1 - exp(-lambda) with lambda the per-user arrival rate per slot
    const double theta = -std::expm1(-sys.model().lambda * cfg_.slot_usd);
    backlog_.update(o.result, static_cast<double>(n_users) * theta);
    sys.ledger().record_frame(r.successes, 1.0, 0);
    sys.advance_clock(cfg_.slot_usd);
    return o;
  }

 private:
  ProtocolConfig cfg_;
  BacklogEstimate backlog_;
};

/// CRA-2 with orthogonal preambles: active users pick a preamble, each
/// transmitted preamble is detected with probability 1 - P_md, and every
/// detected preamble gets one data slot (in preamble order). Users sharing a
/// detected preamble collide; users of a missed preamble wait for the next frame.
class Cra2Protocol {
 public:
  explicit Cra2Protocol(ProtocolConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  FrameReport run_frame(System& sys, Rng& rng) {
    FrameReport r;
    const Usd t0 = sys.clock();
    sys.sync_all(t0, rng);
    const std::vector<UserIndex> active = active_set(sys.users());
    r.active = active.size();

    const std::size_t mp = cfg_.preambles;
    const bool dedicated = !cfg_.implicit_population && mp == sys.population();
    std::vector<std::uint32_t> choice(active.size());
    std::vector<std::uint32_t> count(mp, 0);
    for (std::size_t i = 0; i < active.size(); ++i) {
      choice[i] = dedicated ? active[i] : static_cast<std::uint32_t>(rng.below(mp));
      ++count[choice[i]];
    }
    // slot index per detected preamble, in preamble order
    std::vector<std::int64_t> slot_of(mp, -1);
    std::size_t detected = 0;
    for (std::size_t p = 0; p < mp; ++p) {
      if (count[p] == 0) continue;
      if (rng.bernoulli(cfg_.p_md)) continue;
      slot_of[p] = static_cast<std::int64_t>(detected++);
    }
    r.estimate = detected;
    r.slots = detected;

    std::vector<std::vector<UserIndex>> by_slot(detected);
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (slot_of[choice[i]] >= 0) by_slot[static_cast<std::size_t>(slot_of[choice[i]])].push_back(active[i]);
    }
    // preamble sub-frame, then one feedback symbol per detected preamble
    const Usd overhead = static_cast<double>(mp) + static_cast<double>(detected);
    r.outcomes.reserve(detected);
    for (std::size_t l = 0; l < detected; ++l) {
      const Usd start = t0 + overhead + static_cast<double>(l) * cfg_.slot_usd;
      r.outcomes.push_back(detail::play_slot(sys, l + 1, std::move(by_slot[l]), start, cfg_.slot_usd, rng, r));
    }
    r.duration = overhead + static_cast<double>(detected) * cfg_.slot_usd;
    // efficiency counts the whole frame, overhead included, in slot units
    sys.ledger().record_frame(r.successes, r.duration / cfg_.slot_usd, r.estimate);
    sys.advance_clock(r.duration);
    return r;
  }

 private:
  ProtocolConfig cfg_;
};

}  // namespace pima
