#pragma once

// Packet arrivals and per-user FIFO buffers.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pima/rng.hpp"

namespace pima {

/// Times are in units of symbol duration (usd).
using Usd = double;
using UserIndex = std::uint32_t;

struct Packet {
  UserIndex owner = 0;
  Usd generated_at = 0.0;
  std::optional<Usd> delivered_at;

  Usd latency() const { return delivered_at.value() - generated_at; }
};

/// Half-open time interval [begin, end).
struct Window {
  Usd begin = 0.0;
  Usd end = 0.0;

  Usd duration() const { return end - begin; }
};

class UserState {
 public:
  static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

  explicit UserState(UserIndex id = 0, std::size_t capacity = kUnbounded) : id_(id), capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("buffer capacity must be positive");
  }

  UserIndex id() const { return id_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return buffer_.size(); }
  bool empty() const { return buffer_.empty(); }
  bool active() const { return !buffer_.empty(); }
  const std::deque<Packet>& buffer() const { return buffer_; }

  const Packet& head() const {
    if (buffer_.empty()) throw std::logic_error("head() on an empty buffer");
    return buffer_.front();
  }

  /// Appends a packet. When the buffer is full the oldest packet is evicted
  /// and returned so the caller can account for it.
  std::optional<Packet> push(Packet p) {
    std::optional<Packet> evicted;
    if (buffer_.size() >= capacity_) {
      evicted = std::move(buffer_.front());
      buffer_.pop_front();
    }
    buffer_.push_back(std::move(p));
    return evicted;
  }

  Packet pop_front() {
    if (buffer_.empty()) throw std::logic_error("pop_for_transmission on an empty buffer");
    Packet p = std::move(buffer_.front());
    buffer_.pop_front();
    return p;
  }

 private:
  UserIndex id_;
  std::size_t capacity_;
  std::deque<Packet> buffer_;
};

enum class TrafficVariant { IidSinglePacket, CorrelatedQueued, Bursty };

struct TrafficModel {
  TrafficVariant variant = TrafficVariant::IidSinglePacket;
  double lambda = 0.0;      ///< per-user Poisson rate, packets per usd
  double burst_rate = 0.0;  ///< mean packets per burst
  std::optional<Usd> burst_gap;  ///< mean usd between bursts; single burst when empty

  std::size_t buffer_capacity() const {
    return variant == TrafficVariant::CorrelatedQueued ? UserState::kUnbounded : 1;
  }
  bool retransmissions() const { return variant != TrafficVariant::IidSinglePacket; }

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
    if (!(burst_rate >= 0.0)) throw std::invalid_argument("burst rate must be nonnegative");
    if (burst_gap && !(*burst_gap > 0.0)) throw std::invalid_argument("burst gap must be positive");
  }
};

/// Draws the Poisson arrivals of one user over `window` and appends them in
/// time order. Returns the number of packets evicted from a full buffer.
inline std::size_t generate_arrivals(const TrafficModel& model, UserState& user, Window window, Rng& rng,
                                     std::vector<Packet>* evicted = nullptr) {
  if (model.variant == TrafficVariant::Bursty) return 0;
  const Usd span = window.duration();
  if (!(span > 0.0) || model.lambda == 0.0) return 0;
  const std::uint64_t k = rng.poisson(model.lambda * span);
  if (k == 0) return 0;
  // conditioned on the count, arrival instants are uniform order statistics
  thread_local std::vector<Usd> times;
  times.resize(k);
  for (auto& t : times) t = window.begin + rng.uniform() * span;
  std::sort(times.begin(), times.end());
  std::size_t dropped = 0;
  for (Usd t : times) {
    if (auto old = user.push(Packet{user.id(), t, std::nullopt})) {
      ++dropped;
      if (evicted) evicted->push_back(std::move(*old));
    }
  }
  return dropped;
}

inline std::size_t generate_arrivals(const TrafficModel& model, std::span<UserState> users, Window window,
                                     Rng& rng, std::vector<Packet>* evicted = nullptr) {
  std::size_t dropped = 0;
  for (auto& u : users) dropped += generate_arrivals(model, u, window, rng, evicted);
  return dropped;
}

/// Indices of users with a nonempty buffer. Its size is the active count.
inline std::vector<UserIndex> active_set(std::span<const UserState> users) {
  std::vector<UserIndex> out;
  for (std::size_t n = 0; n < users.size(); ++n) {
    if (users[n].active()) out.push_back(static_cast<UserIndex>(n));
  }
  return out;
}

inline Packet pop_for_transmission(UserState& user) { return user.pop_front(); }

/// Source of traffic bursts over an implicit, arbitrarily large population.
/// Every burst instantiates k ~ Poisson(burst_rate) fresh single-packet users.
class BurstSource {
 public:
  explicit BurstSource(TrafficModel model, Usd first_burst = 0.0) : model_(model), next_(first_burst) {}

  std::optional<Usd> next_burst() const { return next_; }

  /// Users created by the next burst. Advances to the following burst instant
  /// (exponential gaps of mean burst_gap) or exhausts in single-burst mode.
  std::vector<UserState> fire(Rng& rng, UserIndex first_id = 0) {
    if (!next_) return {};
    const Usd at = *next_;
    const std::uint64_t k = rng.poisson(model_.burst_rate);
    std::vector<UserState> users;
    users.reserve(k);
    for (std::uint64_t i = 0; i < k; ++i) {
      const auto id = static_cast<UserIndex>(first_id + i);
      users.emplace_back(id, 1);
      users.back().push(Packet{id, at, std::nullopt});
    }
    if (model_.burst_gap) {
      next_ = at + rng.exponential(1.0 / *model_.burst_gap);
    } else {
      next_.reset();
    }
    return users;
  }

 private:
  TrafficModel model_;
  std::optional<Usd> next_;
};

}  // namespace pima
