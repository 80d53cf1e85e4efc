#pragma once

// Evaluation metrics: cumulative reward, composition of average reward,
// average queuing time, service ratio and overall quality.

#include <span>
#include <vector>

#include "vcps/environment.hpp"
#include "vcps/fusion.hpp"
#include "vcps/model.hpp"

namespace vcps::metrics {

/// Sum of per-slot system rewards.
inline double metric_cr(std::span<const double> rewards) {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

struct Car {
  double timeliness = 0.0;
  double completeness = 0.0;
  double consistency = 0.0;

  double sum() const { return timeliness + completeness + consistency; }
};

/// Weighted complements of each normalized component, averaged over views.
/// With weights summing to 1 the three parts add up to the mean 1 - AoV.
inline Car metric_car(std::span<const fusion::ViewScore> scores, const AovWeights& w) {
  Car c;
  if (scores.empty()) return c;
  for (const auto& s : scores) {
    c.timeliness += w.timeliness * (1.0 - s.normalized.timeliness);
    c.completeness += w.completeness * (1.0 - s.normalized.completeness);
    c.consistency += w.consistency * (1.0 - s.normalized.consistency);
  }
  const double n = static_cast<double>(scores.size());
  c.timeliness /= n;
  c.completeness /= n;
  c.consistency /= n;
  return c;
}

/// Nested mean: per vehicle over its uploaded types, then over vehicles, then
/// over slots. Vehicles that uploaded nothing in a slot are left out of that
/// slot's average, and slots where nobody uploaded are left out entirely.
/// Indexed [slot][vehicle][type].
inline double metric_aqt(const std::vector<std::vector<std::vector<double>>>& queuing) {
  double over_slots = 0.0;
  std::size_t slots = 0;
  for (const auto& slot : queuing) {
    double over_vehicles = 0.0;
    std::size_t vehicles = 0;
    for (const auto& q : slot) {
      if (q.empty()) continue;
      double s = 0.0;
      for (double x : q) s += x;
      over_vehicles += s / static_cast<double>(q.size());
      ++vehicles;
    }
    if (vehicles == 0) continue;
    over_slots += over_vehicles / static_cast<double>(vehicles);
    ++slots;
  }
  return slots == 0 ? 0.0 : over_slots / static_cast<double>(slots);
}

/// Fraction of scored views whose completeness reaches the threshold.
inline double metric_sr(std::span<const fusion::ViewScore> scores, double phi_threshold) {
  if (scores.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : scores)
    if (s.completeness >= phi_threshold) ++ok;
  return static_cast<double>(ok) / static_cast<double>(scores.size());
}

struct EpisodeMetrics {
  double cr = 0.0;
  Car car;
  double aqt = 0.0;
  double sr = 0.0;
  double quality = 0.0;  // mean 1 - AoV over every scored view
};

inline EpisodeMetrics summarize(std::span<const sim::SlotOutcome> slots, const FusionParams& fusion,
                                double phi_threshold) {
  EpisodeMetrics m;
  std::vector<double> rewards;
  std::vector<fusion::ViewScore> scores;
  std::vector<double> aovs;
  std::vector<std::vector<std::vector<double>>> queuing;
  for (const auto& s : slots) {
    rewards.push_back(s.reward);
    for (const auto& per_edge : s.scores)
      for (const auto& v : per_edge) {
        scores.push_back(v);
        aovs.push_back(v.aov);
      }
    auto& q = queuing.emplace_back();
    for (const auto& v : s.vehicles) q.push_back(v.queuing);
  }
  m.cr = metric_cr(rewards);
  m.car = metric_car(scores, fusion.weights);
  m.aqt = metric_aqt(queuing);
  m.sr = metric_sr(scores, phi_threshold);
  m.quality = aovs.empty() ? 0.0 : fusion::vcps_quality(aovs);
  return m;
}

}  // namespace vcps::metrics
