#pragma once

// Action representation and the non-learning policies: continuous-to-action
// decoding shared with the learners, the edge's rank-based bandwidth rule,
// the random baseline, and the C1-C5 constraint auditor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcps/model.hpp"
#include "vcps/rng.hpp"

namespace vcps::policy {

/// Target workload when a requested action would saturate the queue.
inline constexpr double kLoadMargin = 0.999;

struct TypeSetting {
  int type = 0;
  double frequency_hz = 0.0;
  int priority = 0;     // 1..n among active types, larger is served first; 0 when inactive
  bool active = false;  // sensed and uploaded this slot
};

/// One entry per sensible type, in the vehicle's sensible_types order.
struct VehicleAction {
  std::vector<TypeSetting> settings;

  std::size_t active_count() const {
    return static_cast<std::size_t>(std::count_if(settings.begin(), settings.end(), [](const auto& s) { return s.active; }));
  }
};

struct Allocation {
  int vehicle = 0;
  double bandwidth_hz = 0.0;
};

struct EdgeAction {
  double capacity_hz = 0.0;
  std::vector<Allocation> allocations;

  double total() const {
    double s = 0.0;
    for (const auto& a : allocations) s += a.bandwidth_hz;
    return s;
  }
};

inline std::size_t raw_action_size(const VehicleState& s) { return 2 * s.sensible_types.size(); }

/// Maps raw in [0,1]^(2n) to frequencies and priorities. The first half sets
/// lambda = lambda_min + raw * (lambda_max - lambda_min); the second half
/// ranks types (higher score, higher priority; ties go to the lower type id).
///
/// `service_means` holds each type's mean transfer time alpha (infinite when
/// the link cannot carry data). Queue stability sum(lambda*alpha) < 1 is then
/// enforced in three steps:
///  1. types are dropped, lowest priority first, until the minimum
///     frequencies alone fit under the margin;
///  2. if the requested load exceeds the margin, frequencies are scaled
///     uniformly to reach it;
///  3. if uniform scaling would push a frequency under its minimum, only the
///     part above the minimum is scaled instead.
inline VehicleAction decode_action(std::span<const double> raw, const VehicleState& s,
                                   std::span<const double> service_means) {
  const std::size_t n = s.sensible_types.size();
  if (raw.size() != 2 * n) throw std::invalid_argument("raw action has wrong length");
  if (service_means.size() != n) throw std::invalid_argument("service means do not match sensible types");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (raw[n + a] != raw[n + b]) return raw[n + a] > raw[n + b];
    return s.sensible_types[a] < s.sensible_types[b];
  });

  VehicleAction act;
  act.settings.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = s.freq_bounds[i];
    const double r = std::clamp(raw[i], 0.0, 1.0);
    act.settings[i].type = s.sensible_types[i];
    act.settings[i].frequency_hz = b.min_hz + r * (b.max_hz - b.min_hz);
    act.settings[i].active = std::isfinite(service_means[i]) && service_means[i] > 0.0;
  }

  auto min_load = [&]() {
    double load = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (act.settings[i].active) load += s.freq_bounds[i].min_hz * service_means[i];
    return load;
  };
  for (auto it = order.rbegin(); it != order.rend() && min_load() >= kLoadMargin; ++it)
    act.settings[*it].active = false;

  double load = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (act.settings[i].active) load += act.settings[i].frequency_hz * service_means[i];
  if (load > kLoadMargin) {
    const double k = kLoadMargin / load;
    bool uniform_ok = true;
    for (std::size_t i = 0; i < n; ++i)
      if (act.settings[i].active && k * act.settings[i].frequency_hz < s.freq_bounds[i].min_hz) uniform_ok = false;
    if (uniform_ok) {
      for (auto& st : act.settings)
        if (st.active) st.frequency_hz *= k;
    } else {
      const double base = min_load();
      double excess = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (act.settings[i].active)
          excess += (act.settings[i].frequency_hz - s.freq_bounds[i].min_hz) * service_means[i];
      const double ke = excess > 0.0 ? (kLoadMargin - base) / excess : 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (act.settings[i].active) {
          const double lo = s.freq_bounds[i].min_hz;
          act.settings[i].frequency_hz = lo + ke * (act.settings[i].frequency_hz - lo);
        }
    }
  }

  int next = static_cast<int>(act.active_count());
  for (std::size_t idx : order)
    if (act.settings[idx].active) act.settings[idx].priority = next--;
  return act;
}

/// Total size in bits of the sensed types that any of `views` requires;
/// each type counts once.
inline double required_info_size(std::span<const int> sensed, std::span<const ViewSpec> views,
                                 const Scenario& sc) {
  double bits = 0.0;
  for (int d : sensed) {
    const bool needed = std::any_of(views.begin(), views.end(), [&](const ViewSpec& v) { return v.requires_type(d); });
    if (needed) bits += static_cast<double>(sc.data_size(d));
  }
  return bits;
}

struct RankEntry {
  int vehicle = 0;
  double required_bits = 0.0;
  double avg_distance = 0.0;
};

/// Ranks 1..n aligned with `entries`: larger required size first, then
/// nearer predicted distance, then lower vehicle id.
inline std::vector<int> rank_vehicles(std::span<const RankEntry> entries) {
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = entries[a];
    const auto& y = entries[b];
    if (x.required_bits != y.required_bits) return x.required_bits > y.required_bits;
    if (x.avg_distance != y.avg_distance) return x.avg_distance < y.avg_distance;
    return x.vehicle < y.vehicle;
  });
  std::vector<int> ranks(entries.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r) + 1;
  return ranks;
}

/// b_s = b_e / (omega + rank_s), rescaled proportionally when the shares
/// would exceed capacity.
inline EdgeAction allocate_bandwidth(std::span<const int> vehicles, std::span<const int> ranks, double capacity_hz,
                                     double omega) {
  if (vehicles.size() != ranks.size()) throw std::invalid_argument("vehicles and ranks differ in length");
  EdgeAction act;
  act.capacity_hz = capacity_hz;
  double total = 0.0;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const double share = capacity_hz / (omega + static_cast<double>(ranks[i]));
    act.allocations.push_back({vehicles[i], share});
    total += share;
  }
  if (total > capacity_hz) {
    const double k = capacity_hz / total;
    for (auto& a : act.allocations) a.bandwidth_hz *= k;
  }
  return act;
}

/// Uniform point on the simplex scaled to capacity.
inline EdgeAction random_allocation(std::span<const int> vehicles, double capacity_hz, Rng& rng) {
  EdgeAction act;
  act.capacity_hz = capacity_hz;
  if (vehicles.empty()) return act;
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(vehicles.size());
  double sum = 0.0;
  for (auto& x : w) sum += (x = e(rng));
  for (std::size_t i = 0; i < vehicles.size(); ++i) act.allocations.push_back({vehicles[i], capacity_hz * w[i] / sum});
  return act;
}

/// Raw vehicle actions uniform on [0,1]^(2n); decoding turns the first half
/// into uniform frequencies and the second into a uniform permutation.
inline std::vector<double> random_raw_action(const VehicleState& s, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> raw(raw_action_size(s));
  for (auto& x : raw) x = u(rng);
  return raw;
}

/// Softmax over `scores` (one per vehicle) scaled to capacity.
inline EdgeAction softmax_allocation(std::span<const int> vehicles, std::span<const double> scores,
                                     double capacity_hz, double temperature) {
  EdgeAction act;
  act.capacity_hz = capacity_hz;
  if (vehicles.empty()) return act;
  double top = -std::numeric_limits<double>::infinity();
  for (double s : scores) top = std::max(top, s);
  std::vector<double> w(vehicles.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < vehicles.size(); ++i) sum += (w[i] = std::exp(temperature * (scores[i] - top)));
  for (std::size_t i = 0; i < vehicles.size(); ++i) act.allocations.push_back({vehicles[i], capacity_hz * w[i] / sum});
  return act;
}

/// C1, C2 and C4 for one vehicle's decoded action. Empty when compliant.
inline std::vector<std::string> audit_vehicle(const VehicleAction& act, const VehicleState& s,
                                              std::span<const double> service_means) {
  std::vector<std::string> v;
  const std::string who = "vehicle " + std::to_string(s.id) + ": ";
  std::vector<int> prios;
  double load = 0.0;
  for (std::size_t i = 0; i < act.settings.size(); ++i) {
    const auto& st = act.settings[i];
    if (!st.active) continue;
    const auto& b = s.freq_bounds[i];
    if (!(st.frequency_hz >= b.min_hz * (1 - 1e-12) && st.frequency_hz <= b.max_hz * (1 + 1e-12)))
      v.push_back(who + "C1 frequency " + std::to_string(st.frequency_hz) + " outside bounds for type " +
                  std::to_string(st.type));
    prios.push_back(st.priority);
    if (!std::isfinite(service_means[i])) v.push_back(who + "C4 active type with unusable link");
    load += st.frequency_hz * service_means[i];
  }
  std::sort(prios.begin(), prios.end());
  for (std::size_t i = 0; i < prios.size(); ++i)
    if (prios[i] != static_cast<int>(i) + 1) {
      v.push_back(who + "C2 priorities are not a permutation of 1..n");
      break;
    }
  if (!(load < 1.0)) v.push_back(who + "C4 workload " + std::to_string(load) + " not below 1");
  return v;
}

/// C3 and C5 for an edge allocation.
inline std::vector<std::string> audit_edge(const EdgeAction& act) {
  std::vector<std::string> v;
  const double tol = 1e-9 * act.capacity_hz;
  for (const auto& a : act.allocations)
    if (!(a.bandwidth_hz >= 0.0 && a.bandwidth_hz <= act.capacity_hz + tol))
      v.push_back("C3 allocation " + std::to_string(a.bandwidth_hz) + " for vehicle " + std::to_string(a.vehicle));
  if (!(act.total() <= act.capacity_hz + tol))
    v.push_back("C5 total allocation " + std::to_string(act.total()) + " exceeds capacity");
  return v;
}

}  // namespace vcps::policy
