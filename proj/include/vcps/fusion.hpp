#pragma once

// Age-of-View scoring: timeliness, completeness and consistency of a view
// built from successfully received uploads, their normalization, and the
// episode-level quality average.

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

#include "vcps/model.hpp"

namespace vcps::fusion {

/// One upload attempt from a vehicle to its edge in a slot.
struct ReceivedInfo {
  int type = 0;
  int vehicle = 0;
  double interarrival = 0.0;  // a
  double queuing = 0.0;       // q
  double transmission = 0.0;  // g
  bool success = false;       // c

  double timeliness() const { return interarrival + queuing + transmission; }
  double receiving_time() const { return queuing + transmission; }
};

struct Normalized {
  double timeliness = 1.0;
  double completeness = 1.0;
  double consistency = 1.0;
};

struct ViewScore {
  int view = 0;
  double timeliness = 0.0;    // Xi, seconds
  double completeness = 0.0;  // Phi
  double consistency = 0.0;   // Psi, seconds^2
  std::size_t received = 0;   // |D_{v,e}|, duplicates included
  Normalized normalized;
  double aov = 1.0;
};

/// Successful uploads whose type the view requires. Duplicate types from
/// different vehicles are all kept.
inline std::vector<ReceivedInfo> received_set(const ViewSpec& view, std::span<const ReceivedInfo> uploads) {
  std::vector<ReceivedInfo> out;
  for (const auto& u : uploads)
    if (u.success && view.requires_type(u.type)) out.push_back(u);
  return out;
}

inline double view_timeliness(std::span<const ReceivedInfo> receipts) {
  double sum = 0.0;
  for (const auto& r : receipts) sum += r.timeliness();
  return sum;
}

/// Distinct required types received over |D_v|; never exceeds 1.
inline double view_completeness(const ViewSpec& view, std::span<const ReceivedInfo> receipts) {
  std::vector<int> types;
  for (const auto& r : receipts)
    if (view.requires_type(r.type)) types.push_back(r.type);
  std::sort(types.begin(), types.end());
  types.erase(std::unique(types.begin(), types.end()), types.end());
  return std::min(1.0, static_cast<double>(types.size()) / static_cast<double>(view.required.size()));
}

inline double mean_receiving_time(std::span<const ReceivedInfo> receipts) {
  if (receipts.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : receipts) sum += r.receiving_time();
  return sum / static_cast<double>(receipts.size());
}

/// Sum of squared deviations of receiving times from their mean; 0 when empty.
inline double view_consistency(std::span<const ReceivedInfo> receipts) {
  const double mean = mean_receiving_time(receipts);
  double sum = 0.0;
  for (const auto& r : receipts) {
    const double dev = r.receiving_time() - mean;
    sum += dev * dev;
  }
  return sum;
}

inline double max_squared_deviation(std::span<const ReceivedInfo> receipts) {
  const double mean = mean_receiving_time(receipts);
  double best = 0.0;
  for (const auto& r : receipts) {
    const double dev = r.receiving_time() - mean;
    best = std::max(best, dev * dev);
  }
  return best;
}

struct NormalizationContext {
  double delta_xi = 1.0;
  double delta_psi = 1.0;
  std::size_t received = 0;  // |D_{v,e}|
  int horizon = 1;           // |T|
  double max_squared_deviation = 0.0;
};

inline double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

/// Min-max scaling of the three components, clamped into [0, 1]. A view
/// with nothing received scores worst (1) on every component. Zero spread
/// in receiving times scores a perfect consistency of 0.
inline Normalized normalize_components(double timeliness, double completeness, double consistency,
                                       const NormalizationContext& ctx) {
  if (ctx.received == 0) return {1.0, 1.0, 1.0};
  Normalized n;
  n.timeliness =
      clamp01(timeliness / (ctx.delta_xi * static_cast<double>(ctx.received) * static_cast<double>(ctx.horizon)));
  n.completeness = clamp01(1.0 - completeness);
  if (consistency <= 0.0 || ctx.max_squared_deviation <= 0.0)
    n.consistency = 0.0;
  else
    n.consistency = clamp01(consistency / (ctx.delta_psi * ctx.max_squared_deviation));
  return n;
}

inline double age_of_view(const Normalized& n, const AovWeights& w) {
  return clamp01(w.timeliness * n.timeliness + w.completeness * n.completeness + w.consistency * n.consistency);
}

/// Scores one view against all uploads an edge saw in a slot.
inline ViewScore score_view(const ViewSpec& view, std::span<const ReceivedInfo> uploads, const FusionParams& params,
                            int horizon) {
  const auto receipts = received_set(view, uploads);
  ViewScore s;
  s.view = view.id;
  s.received = receipts.size();
  s.timeliness = view_timeliness(receipts);
  s.completeness = view_completeness(view, receipts);
  s.consistency = view_consistency(receipts);
  NormalizationContext ctx{params.delta_xi, params.delta_psi, receipts.size(), horizon,
                           max_squared_deviation(receipts)};
  s.normalized = normalize_components(s.timeliness, s.completeness, s.consistency, ctx);
  s.aov = age_of_view(s.normalized, params.weights);
  return s;
}

/// Mean complement of AoV over every scored (slot, edge, view).
inline double vcps_quality(std::span<const double> aovs) {
  if (aovs.empty()) throw std::invalid_argument("quality needs at least one scored view");
  double sum = 0.0;
  for (double a : aovs) sum += 1.0 - a;
  return sum / static_cast<double>(aovs.size());
}

}  // namespace vcps::fusion
