#pragma once

// Slot allocation for the data-transmission sub-frame.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pima/rng.hpp"

namespace pima {

/// Seed of the shared scheduling-sequence list. Transmitters and the receiver
/// must agree on it bit for bit.
inline constexpr std::uint64_t kSequencePoolSeed = 0x50494D415345510AULL;

/// Users per slot for a balanced assignment of N users to L2 slots: the first
/// N mod L2 slots get ceil(N/L2), the rest floor(N/L2).
inline std::vector<std::size_t> slot_loads(std::size_t population, std::size_t slots) {
  if (population < 1 || slots < 1) throw std::invalid_argument("population and slots must be positive");
  std::vector<std::size_t> u(slots, population / slots);
  for (std::size_t l = 0; l < population % slots; ++l) ++u[l];
  return u;
}

/// Probability that slot l carries exactly one active user, given nu active
/// users drawn uniformly among N and u users assigned to the slot:
///   u * C(N - u, nu - 1) / C(N, nu).
/// Evaluated as u * (nu/N) * prod_{i=0}^{nu-2} (N-u-i)/(N-1-i), which stays in
/// [0, 1] term by term.
inline double success_probability(std::size_t population, std::size_t active, std::size_t load) {
  if (active > population) throw std::invalid_argument("active count exceeds population");
  if (load > population) throw std::invalid_argument("slot load exceeds population");
  if (active == 0 || load == 0) return 0.0;
  if (load + active - 1 > population) return 0.0;  // C(N-u, nu-1) = 0
  const double n = static_cast<double>(population);
  double ratio = static_cast<double>(active) / n;
  for (std::size_t i = 0; i + 1 < active; ++i) {
    ratio *= static_cast<double>(population - load - i) / (n - 1.0 - static_cast<double>(i));
  }
  return static_cast<double>(load) * ratio;
}

/// Conditional frame efficiency: mean per-slot success probability under the
/// balanced assignment of N users to L2 slots.
inline double efficiency(std::size_t population, std::size_t active, std::size_t slots) {
  if (slots < 1) throw std::invalid_argument("slots must be positive");
  const std::size_t hi = population / slots + 1;
  const std::size_t lo = population / slots;
  const std::size_t n_hi = population % slots;
  const std::size_t n_lo = slots - n_hi;
  double sum = 0.0;
  if (n_hi) sum += static_cast<double>(n_hi) * success_probability(population, active, hi);
  if (n_lo && lo) sum += static_cast<double>(n_lo) * success_probability(population, active, lo);
  return sum / static_cast<double>(slots);
}

/// Limit of the frame efficiency as N grows with nu fixed.
inline double asymptotic_efficiency(std::size_t active, std::size_t slots) {
  if (slots < 1) throw std::invalid_argument("slots must be positive");
  const double l = static_cast<double>(slots);
  return static_cast<double>(active) / l * std::pow(1.0 - 1.0 / l, static_cast<double>(active) - 1.0);
}

namespace detail {

// a beats b when strictly larger beyond rounding noise
inline bool better(double a, double b) { return a > b + 1e-13 * std::max(1.0, std::fabs(b)); }

inline std::size_t scan_argmax(std::size_t population, std::size_t active, std::size_t lo, std::size_t hi) {
  std::size_t best = lo;
  double best_eta = efficiency(population, active, lo);
  for (std::size_t l = lo + 1; l <= hi; ++l) {
    const double e = efficiency(population, active, l);
    if (better(e, best_eta)) {
      best = l;
      best_eta = e;
    }
  }
  return best;
}

}  // namespace detail

/// Populations up to this size are always solved by exhaustive scan.
inline constexpr std::size_t kExhaustiveScanLimit = 1024;

/// DT length in 1..N maximizing efficiency(N, nu, .); ties go to the shorter frame.
inline std::size_t optimal_L2_finite(std::size_t population, std::size_t active) {
  if (active < 1 || active > population) throw std::invalid_argument("need 1 <= active <= population");
  if (active == 1) return 1;
  if (population <= kExhaustiveScanLimit) return detail::scan_argmax(population, active, 1, population);

  // ternary search on the integer domain, then a local scan to absorb plateaus
  std::size_t lo = 1, hi = population;
  while (hi - lo > 8) {
    const std::size_t m1 = lo + (hi - lo) / 3;
    const std::size_t m2 = hi - (hi - lo) / 3;
    if (efficiency(population, active, m1) < efficiency(population, active, m2)) {
      lo = m1 + 1;
    } else {
      hi = m2;
    }
  }
  const std::size_t from = lo > 4 ? lo - 4 : 1;
  const std::size_t to = std::min(population, hi + 4);
  return detail::scan_argmax(population, active, from, to);
}

/// Large-population rule: the optimal DT length equals the active count.
inline std::size_t optimal_L2_asymptotic(std::size_t active) {
  if (active < 1) throw std::invalid_argument("active count must be positive");
  return active;
}

/// Offline table of the finite-population optimum, indexed by active count.
class L2Table {
 public:
  struct Entry {
    std::size_t slots;
    double efficiency;
  };

  L2Table(std::size_t population, std::size_t nu_max) : population_(population) {
    if (nu_max > population) throw std::invalid_argument("nu_max exceeds population");
    entries_.reserve(nu_max + 1);
    entries_.push_back({0, 0.0});
    for (std::size_t nu = 1; nu <= nu_max; ++nu) {
      const std::size_t l = optimal_L2_finite(population, nu);
      entries_.push_back({l, efficiency(population, nu, l)});
    }
  }
  explicit L2Table(std::size_t population) : L2Table(population, population) {}

  std::size_t population() const { return population_; }
  std::size_t nu_max() const { return entries_.size() - 1; }
  const Entry& operator[](std::size_t nu) const { return entries_.at(nu); }

  void write_csv(std::ostream& os) const {
    os << "nu,L2_opt,eta_opt\n";
    char buf[64];
    for (std::size_t nu = 1; nu < entries_.size(); ++nu) {
      std::snprintf(buf, sizeof buf, "%.12g", entries_[nu].efficiency);
      os << nu << ',' << entries_[nu].slots << ',' << buf << '\n';
    }
  }

 private:
  std::size_t population_;
  std::vector<Entry> entries_;
};

/// The J scheduling sequences known to every user. For a finite population
/// each sequence is a permutation of 0..N-1 stored as user -> position. For an
/// implicit (unbounded) population the position is a keyed hash of the user id.
class SequencePool {
 public:
  /// Pool for an implicit population.
  static SequencePool implicit_population(std::size_t sequences, std::uint64_t seed = kSequencePoolSeed) {
    return SequencePool(sequences, seed);
  }

  /// J random permutations of users 0..N-1.
  static SequencePool permutations(std::size_t population, std::size_t sequences,
                                   std::uint64_t seed = kSequencePoolSeed) {
    SequencePool pool(sequences, seed);
    pool.population_ = population;
    pool.positions_.resize(pool.sequences_);
    std::vector<std::uint32_t> order(population);
    for (std::size_t j = 0; j < pool.sequences_; ++j) {
      std::iota(order.begin(), order.end(), 0u);
      Rng rng(splitmix64(seed ^ splitmix64(j)));
      for (std::size_t i = population; i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
      }
      auto& pos = pool.positions_[j];
      pos.resize(population);
      for (std::size_t i = 0; i < population; ++i) pos[order[i]] = static_cast<std::uint32_t>(i);
    }
    return pool;
  }

  std::size_t sequences() const { return sequences_; }
  bool implicit() const { return positions_.empty(); }
  std::size_t population() const { return population_; }

  /// Position of `user` in sequence j.
  std::uint64_t position(std::size_t j, std::uint64_t user) const {
    if (implicit()) return splitmix64(seed_ ^ splitmix64((j << 40) ^ user));
    return positions_.at(j).at(user);
  }

 private:
  SequencePool(std::size_t sequences, std::uint64_t seed) : sequences_(sequences), seed_(seed) {
    if (sequences_ < 1) throw std::invalid_argument("need at least one sequence");
  }

  std::size_t sequences_;
  std::uint64_t seed_;
  std::size_t population_ = 0;
  std::vector<std::vector<std::uint32_t>> positions_;
};

enum class ScheduleMode { Finite, Asymptotic };

/// Bits carried by the scheduling beacon: sequence index plus the DT length.
inline std::size_t sb_payload_bits(std::size_t population, std::size_t sequences) {
  auto clog2 = [](std::size_t v) {
    std::size_t b = 0;
    while ((std::size_t{1} << b) < v) ++b;
    return b;
  };
  return clog2(sequences) + clog2(population);
}

/// One activity symbol plus the scheduling beacon at `bits_per_symbol`.
inline std::size_t pia_overhead_symbols(std::size_t population, std::size_t sequences,
                                        std::size_t bits_per_symbol = 6) {
  const std::size_t bits = sb_payload_bits(population, sequences);
  return 1 + (bits + bits_per_symbol - 1) / bits_per_symbol;
}

struct FrameSchedule {
  std::size_t slots = 0;  ///< L2; zero means no DT sub-frame
  std::size_t sequence_index = 0;
  double overhead_usd = 3.0;
  const SequencePool* pool = nullptr;

  /// Zero-based slot of `user`. Users are dealt round-robin along the chosen
  /// sequence, which yields exactly the balanced loads of slot_loads.
  std::size_t slot_of(std::uint64_t user) const {
    return static_cast<std::size_t>(pool->position(sequence_index, user) % slots);
  }

  /// Slot selection vector q (1-based) for a finite population.
  std::vector<std::size_t> selection_vector() const {
    std::vector<std::size_t> q(pool->population(), 0);
    if (slots == 0) return q;
    for (std::size_t n = 0; n < q.size(); ++n) q[n] = slot_of(n) + 1;
    return q;
  }
};

/// Schedule for an estimated active count. In finite mode the estimate is
/// clamped to the population and the DT length comes from `table`; in
/// asymptotic mode the DT length equals the estimate.
inline FrameSchedule build_schedule(std::size_t nu_hat, ScheduleMode mode, const SequencePool& pool,
                                    const L2Table* table, Rng& rng, double overhead_usd = 3.0) {
  FrameSchedule s;
  s.pool = &pool;
  s.overhead_usd = overhead_usd;
  s.sequence_index = static_cast<std::size_t>(rng.below(pool.sequences()));
  if (nu_hat == 0) return s;
  if (mode == ScheduleMode::Finite) {
    if (!table) throw std::invalid_argument("finite mode needs an L2 table");
    const std::size_t n = std::min(nu_hat, table->nu_max());
    s.slots = (*table)[n].slots;
  } else {
    s.slots = optimal_L2_asymptotic(nu_hat);
  }
  return s;
}

}  // namespace pima
