#pragma once

// Campaign configuration and orchestration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pima/metrics.hpp"
#include "pima/protocols.hpp"
#include "pima/rng.hpp"
#include "pima/traffic.hpp"

namespace pima {

enum class Scenario { Iid, Correlated, Bursty };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::Iid: return "iid";
    case Scenario::Correlated: return "correlated";
    case Scenario::Bursty: return "bursty";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "iid") return Scenario::Iid;
  if (s == "correlated") return Scenario::Correlated;
  if (s == "bursty") return Scenario::Bursty;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected iid, correlated or bursty)");
}

/// A protocol entry of a campaign. CRA-2 entries carry their preamble rule:
/// cra2-full (M_p = N), cra2-half (M_p = N/2), cra2-ideal (M_p = burst rate)
/// or cra2-<M> for a fixed pool.
struct ProtocolSpec {
  enum class Preambles { Full, Half, Ideal, Fixed };

  std::string name;
  Protocol variant = Protocol::PIMA;
  Preambles preambles = Preambles::Full;
  std::size_t fixed_preambles = 0;

  static ProtocolSpec parse(const std::string& name) {
    ProtocolSpec p;
    p.name = name;
    if (name == "pima") {
      p.variant = Protocol::PIMA;
    } else if (name == "tdma") {
      p.variant = Protocol::TDMA;
    } else if (name == "saloha") {
      p.variant = Protocol::SALOHA;
    } else if (name.rfind("cra2-", 0) == 0) {
      p.variant = Protocol::CRA2;
      const std::string rule = name.substr(5);
      if (rule == "full") {
        p.preambles = Preambles::Full;
      } else if (rule == "half") {
        p.preambles = Preambles::Half;
      } else if (rule == "ideal") {
        p.preambles = Preambles::Ideal;
      } else {
        std::size_t used = 0;
        unsigned long long m = 0;
        try {
          m = std::stoull(rule, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != rule.size() || m == 0) throw std::invalid_argument("bad CRA-2 preamble rule in '" + name + "'");
        p.preambles = Preambles::Fixed;
        p.fixed_preambles = static_cast<std::size_t>(m);
      }
    } else {
      throw std::invalid_argument("unknown protocol '" + name +
                                  "' (expected pima, tdma, saloha, cra2-full, cra2-half, cra2-ideal or cra2-<M>)");
    }
    return p;
  }

  std::size_t preamble_count(std::size_t population, double load) const {
    switch (preambles) {
      case Preambles::Full: return population;
      case Preambles::Half: return std::max<std::size_t>(1, population / 2);
      case Preambles::Ideal: return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(load)));
      case Preambles::Fixed: return fixed_preambles;
    }
    return population;
  }
};

struct CampaignConfig {
  Scenario scenario = Scenario::Iid;
  std::vector<std::string> protocols{"pima", "tdma", "saloha", "cra2-half", "cra2-full"};
  std::size_t population = 50;  ///< N; ignored by the bursty scenario
  double slot_usd = 10.0;       ///< T_s
  double snr_db = 10.0;
  std::size_t sequences = 64;  ///< J
  double p_md = 0.1;
  double pia_overhead_usd = 3.0;
  CountDetector detector = CountDetector::Map;
  bool eta_counts_overhead = false;
  std::vector<double> sweep;  ///< Lambda [pkt/slot] or burst rate [pkt/burst]
  std::uint64_t frames = 100000;
  std::uint64_t bursts = 1000;
  std::optional<double> warmup_fraction;  ///< defaults: 0.1 correlated, 0 otherwise
  std::uint64_t replicates = 1;
  std::uint64_t seed = 1;
  std::string output = ".";
  unsigned threads = 0;  ///< 0 = hardware concurrency

  double warmup() const {
    if (warmup_fraction) return *warmup_fraction;
    return scenario == Scenario::Correlated ? 0.1 : 0.0;
  }

  /// Per-user arrival rate in packets per usd for a normalized load Lambda:
  /// every user generates Lambda / (N T_s) packets per slot.
  double per_user_rate(double load) const {
    return load / (static_cast<double>(population) * slot_usd * slot_usd);
  }

  void validate() const {
    if (sweep.empty()) throw std::invalid_argument("sweep must not be empty");
    if (protocols.empty()) throw std::invalid_argument("protocol list must not be empty");
    if (frames < 1) throw std::invalid_argument("frames must be at least 1");
    if (bursts < 1) throw std::invalid_argument("bursts must be at least 1");
    if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
    if (!(slot_usd > 0.0)) throw std::invalid_argument("slot length must be positive");
    if (scenario != Scenario::Bursty && population < 1) throw std::invalid_argument("population must be positive");
    const double w = warmup();
    if (!(w >= 0.0 && w < 1.0)) throw std::invalid_argument("warmup fraction must be in [0, 1)");
    for (double v : sweep) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("sweep values must be finite and nonnegative");
    }
    for (const auto& name : protocols) {
      const ProtocolSpec p = ProtocolSpec::parse(name);
      if (scenario == Scenario::Bursty) {
        if (p.variant == Protocol::SALOHA)
          throw std::invalid_argument(
              "saloha is not supported in the bursty scenario: packets generated simultaneously collide with "
              "probability 1");
        if (p.variant == Protocol::TDMA)
          throw std::invalid_argument(
              "tdma is not supported in the bursty scenario: an arbitrarily large population gives an unbounded "
              "frame");
        if (p.variant == Protocol::CRA2 &&
            (p.preambles == ProtocolSpec::Preambles::Full || p.preambles == ProtocolSpec::Preambles::Half))
          throw std::invalid_argument("'" + name +
                                      "' needs a finite population; use cra2-ideal or cra2-<M> for bursts");
      } else if (p.variant == Protocol::CRA2 && p.preambles == ProtocolSpec::Preambles::Ideal) {
        throw std::invalid_argument("cra2-ideal is only defined for the bursty scenario");
      }
    }
  }
};

inline void to_json(nlohmann::json& j, const CampaignConfig& c) {
  j = nlohmann::json{{"scenario", to_string(c.scenario)},
                     {"protocols", c.protocols},
                     {"N", c.population},
                     {"T_s", c.slot_usd},
                     {"snr_db", c.snr_db},
                     {"J", c.sequences},
                     {"P_md", c.p_md},
                     {"pia_overhead_usd", c.pia_overhead_usd},
                     {"detector", to_string(c.detector)},
                     {"eta_counts_overhead", c.eta_counts_overhead},
                     {"sweep", c.sweep},
                     {"frames", c.frames},
                     {"bursts", c.bursts},
                     {"replicates", c.replicates},
                     {"seed", c.seed},
                     {"output", c.output},
                     {"threads", c.threads}};
  if (c.warmup_fraction) j["warmup_fraction"] = *c.warmup_fraction;
}

inline void from_json(const nlohmann::json& j, CampaignConfig& c) {
  static const char* known[] = {"scenario", "protocols",  "N",      "T_s",      "snr_db",
                                "J",        "P_md",       "pia_overhead_usd",  "detector",
                                "eta_counts_overhead",    "sweep",  "frames",   "bursts",
                                "warmup_fraction",        "replicates",         "seed",
                                "output",   "threads"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known))
      throw std::invalid_argument("unknown config field '" + it.key() + "'");
  }
  c.scenario = parse_scenario(j.at("scenario").get<std::string>());
  if (j.contains("protocols")) c.protocols = j.at("protocols").get<std::vector<std::string>>();
  c.population = j.value("N", c.population);
  c.slot_usd = j.value("T_s", c.slot_usd);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.sequences = j.value("J", c.sequences);
  c.p_md = j.value("P_md", c.p_md);
  c.pia_overhead_usd = j.value("pia_overhead_usd", c.pia_overhead_usd);
  if (j.contains("detector")) c.detector = parse_count_detector(j.at("detector").get<std::string>());
  c.eta_counts_overhead = j.value("eta_counts_overhead", c.eta_counts_overhead);
  c.sweep = j.at("sweep").get<std::vector<double>>();
  c.frames = j.value("frames", c.frames);
  c.bursts = j.value("bursts", c.bursts);
  if (j.contains("warmup_fraction")) c.warmup_fraction = j.at("warmup_fraction").get<double>();
  c.replicates = j.value("replicates", c.replicates);
  c.seed = j.value("seed", c.seed);
  c.output = j.value("output", c.output);
  c.threads = j.value("threads", c.threads);
}

inline CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed config '" + path + "': " + e.what());
  }
  CampaignConfig c = j.get<CampaignConfig>();
  c.validate();
  return c;
}

struct PointResult {
  std::string protocol;
  std::size_t sweep_index = 0;
  double load = 0.0;
  std::uint64_t seed = 0;  ///< sub-seed of the first replicate
  MetricsSummary summary;
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t buffered = 0;
  double final_clock = 0.0;
  double total_duration = 0.0;
};

namespace detail {

inline ProtocolConfig protocol_config(const CampaignConfig& cfg, const ProtocolSpec& spec, double load) {
  ProtocolConfig pc;
  pc.variant = spec.variant;
  pc.slot_usd = cfg.slot_usd;
  pc.p_md = cfg.p_md;
  pc.sequences = cfg.sequences;
  pc.pia_overhead_usd = cfg.pia_overhead_usd;
  pc.noise = NoiseModel::from_snr_db(cfg.snr_db);
  pc.detector = cfg.detector;
  pc.eta_counts_overhead = cfg.eta_counts_overhead;
  if (cfg.scenario == Scenario::Bursty) {
    pc.mode = ScheduleMode::Asymptotic;
    pc.implicit_population = true;
    if (spec.variant == Protocol::CRA2) pc.preambles = spec.preamble_count(0, load);
  } else {
    pc.mode = ScheduleMode::Finite;
    pc.preambles = spec.variant == Protocol::CRA2 ? spec.preamble_count(cfg.population, load) : cfg.population;
  }
  return pc;
}

// Truncation point of the Poisson burst-size prior.
inline std::size_t burst_prior_cap(double mean) {
  return static_cast<std::size_t>(std::ceil(mean + 12.0 * std::sqrt(mean) + 20.0));
}

struct RunTotals {
  std::uint64_t buffered = 0;
  double clock = 0.0;
  double duration = 0.0;
};

inline RunTotals run_queued(const CampaignConfig& cfg, const ProtocolSpec& spec, double load, Rng& rng,
                            MetricsLedger& out) {
  TrafficModel model;
  model.variant = cfg.scenario == Scenario::Iid ? TrafficVariant::IidSinglePacket : TrafficVariant::CorrelatedQueued;
  model.lambda = cfg.per_user_rate(load);
  System sys(model, cfg.population);
  const ProtocolConfig pc = protocol_config(cfg, spec, load);
  const auto warmup = static_cast<std::uint64_t>(std::floor(cfg.warmup() * static_cast<double>(cfg.frames)));

  std::optional<PimaProtocol> pima;
  std::optional<TdmaProtocol> tdma;
  std::optional<SalohaProtocol> saloha;
  std::optional<Cra2Protocol> cra2;
  switch (spec.variant) {
    case Protocol::PIMA: pima.emplace(pc, cfg.population); break;
    case Protocol::TDMA: tdma.emplace(pc); break;
    case Protocol::SALOHA: saloha.emplace(pc); break;
    case Protocol::CRA2: cra2.emplace(pc); break;
  }

  double total = 0.0;
  for (std::uint64_t f = 0; f < cfg.frames; ++f) {
    sys.ledger().set_recording(f >= warmup);
    const Usd before = sys.clock();
    if (pima) {
      pima->run_frame(sys, rng);
    } else if (tdma) {
      tdma->run_frame(sys, rng);
    } else if (saloha) {
      saloha->step(sys, rng);
    } else {
      cra2->run_frame(sys, rng);
    }
    total += sys.clock() - before;
  }
  out.merge(sys.ledger());
  return {sys.buffered(), sys.clock(), total};
}

inline RunTotals run_bursts(const CampaignConfig& cfg, const ProtocolSpec& spec, double load, Rng& rng,
                            MetricsLedger& out) {
  TrafficModel model;
  model.variant = TrafficVariant::Bursty;
  model.burst_rate = load;
  const ProtocolConfig pc = protocol_config(cfg, spec, load);

  std::optional<PimaProtocol> pima;
  std::optional<Cra2Protocol> cra2;
  if (spec.variant == Protocol::PIMA) {
    PimaProtocol::PriorSpec prior;
    prior.kind = PimaProtocol::PriorSpec::Kind::Poisson;
    prior.poisson_mean = load;
    prior.poisson_cap = burst_prior_cap(load);
    pima.emplace(pc, 0, prior);
  } else {
    cra2.emplace(pc);
  }

  RunTotals totals;
  constexpr std::uint64_t kFrameLimit = 100'000'000;
  for (std::uint64_t b = 0; b < cfg.bursts; ++b) {
    BurstSource source(model, 0.0);
    System sys(model, source.fire(rng), 0.0);
    sys.ledger().record_generated(sys.buffered());
    if (sys.buffered() == 0) {
      out.merge(sys.ledger());
      continue;
    }
    std::uint64_t frames = 0;
    while (sys.buffered() > 0) {
      if (++frames > kFrameLimit) throw std::runtime_error("burst did not drain");
      if (pima) {
        pima->run_frame(sys, rng);
      } else {
        cra2->run_frame(sys, rng);
      }
    }
    sys.ledger().record_burst(sys.clock());
    totals.clock += sys.clock();
    totals.duration += sys.clock();
    out.merge(sys.ledger());
  }
  return totals;
}

}  // namespace detail

/// Simulates one (protocol, sweep value) cell over all replicates.
inline PointResult run_point(const CampaignConfig& cfg, const std::string& protocol, std::size_t sweep_index) {
  const ProtocolSpec spec = ProtocolSpec::parse(protocol);
  const double load = cfg.sweep.at(sweep_index);
  PointResult res;
  res.protocol = protocol;
  res.sweep_index = sweep_index;
  res.load = load;
  res.seed = derive_seed(cfg.seed, protocol, sweep_index, 0);
  MetricsLedger ledger;
  for (std::uint64_t r = 0; r < cfg.replicates; ++r) {
    Rng rng(derive_seed(cfg.seed, protocol, sweep_index, r));
    const auto totals = cfg.scenario == Scenario::Bursty ? detail::run_bursts(cfg, spec, load, rng, ledger)
                                                         : detail::run_queued(cfg, spec, load, rng, ledger);
    res.buffered += totals.buffered;
    res.final_clock += totals.clock;
    res.total_duration += totals.duration;
  }
  res.summary = ledger.finalize();
  res.generated = ledger.generated();
  res.delivered = ledger.delivered();
  res.dropped = ledger.dropped();
  return res;
}

/// Runs every (protocol, sweep value) pair. Points are independent and run on
/// a thread pool; the result order is protocol-major, then sweep order.
inline std::vector<PointResult> run_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  const std::size_t n_points = cfg.protocols.size() * cfg.sweep.size();
  std::vector<PointResult> results(n_points);
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_points));

  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n_points || failure) return;
        i = next++;
      }
      try {
        results[i] = run_point(cfg, cfg.protocols[i / cfg.sweep.size()], i % cfg.sweep.size());
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : std::string{}; }

}  // namespace detail

inline void write_results_csv(std::ostream& os, const std::vector<PointResult>& results) {
  os << "protocol,load,eta_bar,d_bar_usd,p_drop,n_frames,seed,d_b_mean_usd,eta_se,d_se,d_b_se\n";
  for (const auto& r : results) {
    const auto& s = r.summary;
    os << r.protocol << ',' << detail::fmt_num(r.load) << ',' << detail::fmt_opt(s.eta_bar) << ','
       << detail::fmt_opt(s.d_bar_usd) << ',' << detail::fmt_opt(s.p_drop) << ',' << s.frames << ',' << r.seed << ','
       << detail::fmt_opt(s.d_b_mean_usd) << ',' << detail::fmt_opt(s.eta_se) << ',' << detail::fmt_opt(s.d_se) << ','
       << detail::fmt_opt(s.d_b_se) << '\n';
  }
}

inline void write_eccdf_csv(std::ostream& os, const std::vector<PointResult>& results) {
  os << "protocol,load,value_usd,eccdf\n";
  for (const auto& r : results) {
    for (const auto& p : r.summary.eccdf) {
      os << r.protocol << ',' << detail::fmt_num(r.load) << ',' << detail::fmt_num(p.value) << ','
         << detail::fmt_num(p.tail) << '\n';
    }
  }
}

}  // namespace pima
