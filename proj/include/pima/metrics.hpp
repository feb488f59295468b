#pragma once

// Per-run accumulators for frame efficiency, latency, drop probability and
// burst transmission time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pima {

/// Count, sum and sum of squares; enough for a mean and its standard error.
struct Accumulator {
  std::uint64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const Accumulator& o) {
    n += o.n;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  std::optional<double> mean() const {
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  }
  std::optional<double> standard_error() const {
    if (n < 2) return std::nullopt;
    const double m = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

struct EccdfPoint {
  double value;
  double tail;  ///< fraction of samples strictly greater than value
};

/// Empirical complementary CDF evaluated at every distinct sample value.
inline std::vector<EccdfPoint> eccdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<EccdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.push_back({samples[i], static_cast<double>(samples.size() - i - 1) / n});
  }
  return out;
}

/// Fraction of samples strictly greater than x.
inline double eccdf_at(const std::vector<double>& samples, double x) {
  if (samples.empty()) return 0.0;
  const auto above = std::count_if(samples.begin(), samples.end(), [x](double s) { return s > x; });
  return static_cast<double>(above) / static_cast<double>(samples.size());
}

struct MetricsSummary {
  std::optional<double> eta_bar;
  std::optional<double> eta_se;
  std::optional<double> d_bar_usd;
  std::optional<double> d_se;
  std::optional<double> p_drop;
  std::optional<double> d_b_mean_usd;
  std::optional<double> d_b_se;
  std::vector<EccdfPoint> eccdf;
  std::uint64_t frames = 0;
};

class MetricsLedger {
 public:
  /// Frames and deliveries are only sampled while recording is on; packet
  /// counters are always kept so conservation can be checked.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }

  /// One frame. Frames with no estimated active user carry no efficiency sample.
  void record_frame(std::size_t successes, double slots, std::size_t nu_hat) {
    if (slots > 0.0 && static_cast<double>(successes) > slots)
      throw std::invalid_argument("more successes than slots");
    ++frames_;
    if (!recording_) return;
    if (nu_hat > 0 && slots > 0.0) eta_.add(static_cast<double>(successes) / slots);
  }

  void record_generated(std::uint64_t n = 1) { generated_ += n; }
  void record_dropped(std::uint64_t n = 1) { dropped_ += n; }

  void record_delivery(double latency_usd) {
    if (!(latency_usd > 0.0)) throw std::invalid_argument("latency must be positive");
    ++delivered_;
    if (recording_) latency_.add(latency_usd);
  }

  void record_burst(double duration_usd) { burst_times_.push_back(duration_usd); }

  std::uint64_t generated() const { return generated_; }
  std::uint64_t delivered() const { return delivered_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t frames() const { return frames_; }
  const Accumulator& eta() const { return eta_; }
  const Accumulator& latency() const { return latency_; }
  const std::vector<double>& burst_times() const { return burst_times_; }

  /// Order-insensitive for every mean and counter; burst samples are pooled.
  void merge(const MetricsLedger& o) {
    eta_.merge(o.eta_);
    latency_.merge(o.latency_);
    generated_ += o.generated_;
    delivered_ += o.delivered_;
    dropped_ += o.dropped_;
    frames_ += o.frames_;
    burst_times_.insert(burst_times_.end(), o.burst_times_.begin(), o.burst_times_.end());
  }

  MetricsSummary finalize() const {
    MetricsSummary s;
    s.eta_bar = eta_.mean();
    s.eta_se = eta_.standard_error();
    s.d_bar_usd = latency_.mean();
    s.d_se = latency_.standard_error();
    if (generated_ > 0) s.p_drop = static_cast<double>(dropped_) / static_cast<double>(generated_);
    Accumulator b;
    for (double x : burst_times_) b.add(x);
    s.d_b_mean_usd = b.mean();
    s.d_b_se = b.standard_error();
    s.eccdf = eccdf(burst_times_);
    s.frames = frames_;
    return s;
  }

 private:
  bool recording_ = true;
  Accumulator eta_;
  Accumulator latency_;
  std::uint64_t generated_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t frames_ = 0;
  std::vector<double> burst_times_;
};

}  // namespace pima
