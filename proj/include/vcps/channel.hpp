#pragma once

// V2I link model: SNR with path loss and fading, Shannon rate, transfer
// time over a piecewise-constant per-slot rate, and SNR-wall success.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "vcps/model.hpp"

namespace vcps::channel {

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

/// Distances under 1 m are clamped to 1 m.
inline double snr(double distance_m, double fading_gain, double tx_power_mw, const ChannelParams& p) {
  const double d = std::max(distance_m, 1.0);
  return fading_gain * fading_gain * p.antenna_constant * std::pow(d, -p.path_loss_exponent) * tx_power_mw /
         dbm_to_mw(p.noise_dbm);
}

/// (sigma^2 - 1) / sigma with sigma = 10^(n/10).
inline double snr_wall(double noise_uncertainty_db) {
  const double sigma = std::pow(10.0, noise_uncertainty_db / 10.0);
  return (sigma * sigma - 1.0) / sigma;
}

inline double transmission_rate(double bandwidth_hz, double snr_ratio) {
  return bandwidth_hz * std::log2(1.0 + snr_ratio);
}

/// Time needed to push `bits` starting at `start` (seconds from episode
/// start) when `rate(slot)` bits/s are available during each whole slot.
/// Empty when the data cannot be delivered before `horizon`.
template <class RateFn>
std::optional<double> transmission_time(double bits, double start, RateFn&& rate, int horizon) {
  if (bits <= 0.0) return 0.0;
  double remaining = bits;
  double t = start;
  const double end = static_cast<double>(horizon);
  while (t < end) {
    const double slot = std::floor(t);
    const double slot_end = slot + 1.0;
    const double r = rate(static_cast<int>(slot));
    if (r > 0.0) {
      const double capacity = r * (slot_end - t);
      if (capacity >= remaining) return t + remaining / r - start;
      remaining -= capacity;
    }
    t = slot_end;
  }
  return std::nullopt;
}

/// True iff every slot overlapping [start, start + duration] is covered and
/// its SNR is strictly above `wall`, and the transfer ends by `horizon`.
template <class SnrFn, class CoveredFn>
bool transmission_success(double start, double duration, SnrFn&& snr_at, CoveredFn&& covered, double wall,
                          int horizon) {
  if (!std::isfinite(duration) || duration < 0.0) return false;
  const double end = start + duration;
  if (end > static_cast<double>(horizon)) return false;
  const int first = static_cast<int>(std::floor(start));
  const int last = duration > 0.0 ? static_cast<int>(std::ceil(end)) - 1 : first;
  for (int s = first; s <= std::max(first, last); ++s) {
    if (s >= horizon || !covered(s)) return false;
    if (!(snr_at(s) > wall)) return false;
  }
  return true;
}

struct ServiceMoments {
  double mean = 0.0;      // alpha
  double variance = 0.0;  // beta
};

/// Mean and variance of a single item's transfer time in one slot. The
/// mean uses the slot's realized fading gain; the variance linearizes the
/// transfer time in the fading gain and scales by the fading variance.
/// `gain_free_snr` is the slot SNR divided by |h|^2.
inline ServiceMoments service_moments(double bits, double bandwidth_hz, double gain_free_snr, double fading_gain,
                                      double fading_variance) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double h2 = fading_gain * fading_gain;
  const double rate = transmission_rate(bandwidth_hz, gain_free_snr * h2);
  if (!(rate > 0.0)) return {inf, inf};
  const double mean = bits / rate;
  const double drate_dh =
      bandwidth_hz * 2.0 * gain_free_snr * std::abs(fading_gain) / ((1.0 + gain_free_snr * h2) * std::log(2.0));
  const double dmean_dh = bits * drate_dh / (rate * rate);
  return {mean, dmean_dh * dmean_dh * fading_variance};
}

}  // namespace vcps::channel
