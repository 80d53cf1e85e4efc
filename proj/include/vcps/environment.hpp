#pragma once

// Slot-by-slot simulation of cooperative sensing and V2I uploading.
//
// Each slot, every vehicle is served by its nearest covering edge (if any).
// Its decoded action fixes the sensing frequency and priority of each type;
// the edge's allocation fixes its bandwidth. Each active type then uploads
// one item: queuing time from the priority-queue model, transfer time from
// the per-slot Shannon rate starting at t + q, and success from the SNR
// wall and coverage over the transfer. The edge scores its views on the
// successful uploads of the slot.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "vcps/channel.hpp"
#include "vcps/fusion.hpp"
#include "vcps/mobility.hpp"
#include "vcps/model.hpp"
#include "vcps/policy.hpp"
#include "vcps/queueing.hpp"
#include "vcps/rng.hpp"

namespace vcps::sim {

struct LinkRealization {
  double noise_uncertainty_db = 0.0;
  double snr_wall = 0.0;
  std::vector<double> fading;  // h per slot
};

/// Channel randomness for one episode, indexed [vehicle][edge].
struct EpisodeChannel {
  std::vector<std::vector<LinkRealization>> links;
};

/// Noise uncertainty is drawn once per link and episode; fading once per
/// link and slot. Each link has its own substream.
inline EpisodeChannel draw_channel(const Scenario& sc, std::uint64_t seed, std::uint64_t episode) {
  const auto& p = sc.config().channel;
  EpisodeChannel ch;
  ch.links.resize(sc.vehicles().size());
  for (std::size_t v = 0; v < sc.vehicles().size(); ++v) {
    ch.links[v].resize(sc.edges().size());
    for (std::size_t e = 0; e < sc.edges().size(); ++e) {
      Rng rng = make_stream(seed, Stream::channel, {episode, v, e});
      std::uniform_real_distribution<double> n_db(p.noise_uncertainty_min_db, p.noise_uncertainty_max_db);
      std::normal_distribution<double> h(p.fading_mean, std::sqrt(p.fading_variance));
      auto& link = ch.links[v][e];
      link.noise_uncertainty_db = p.noise_uncertainty_max_db > p.noise_uncertainty_min_db ? n_db(rng)
                                                                                          : p.noise_uncertainty_min_db;
      link.snr_wall = channel::snr_wall(link.noise_uncertainty_db);
      link.fading.resize(static_cast<std::size_t>(sc.horizon()));
      for (auto& x : link.fading) x = p.fading_variance > 0 ? h(rng) : p.fading_mean;
    }
  }
  return ch;
}

struct SlotDecision {
  std::vector<std::vector<double>> raw;         // per vehicle, raw_action_size each
  std::vector<policy::EdgeAction> edge_actions;  // per edge
};

struct VehicleSlot {
  int edge = -1;  // serving edge index, -1 when uncovered
  double bandwidth_hz = 0.0;
  policy::VehicleAction action;
  std::vector<double> service_means;      // alpha per sensible type
  std::vector<double> service_variances;  // beta per sensible type
  std::vector<double> queuing;            // q per active type (in sensible order)
};

struct SlotOutcome {
  int slot = 0;
  std::vector<VehicleSlot> vehicles;
  std::vector<std::vector<fusion::ReceivedInfo>> uploads;  // per edge, every attempt
  std::vector<std::vector<fusion::ViewScore>> scores;      // per edge
  double reward = 0.0;
  std::vector<double> difference_rewards;  // per vehicle
};

/// Mutable per-episode state observed by the agents.
struct EpisodeState {
  std::vector<std::vector<double>> frequency_level;  // [vehicle][sensible] last normalized lambda, 0 if inactive
  std::vector<std::vector<std::pair<int, double>>> receipts;  // [edge] (type, arrival time)
};

class Environment {
 public:
  explicit Environment(Scenario sc) : sc_(std::move(sc)) { precompute(); }

  const Scenario& scenario() const { return sc_; }
  int horizon() const { return sc_.horizon(); }
  std::size_t vehicle_count() const { return sc_.vehicles().size(); }
  std::size_t edge_count() const { return sc_.edges().size(); }

  /// NaN when the vehicle is absent at t.
  double distance_to(std::size_t v, std::size_t e, int t) const { return dist_[index(v, e, t)]; }
  bool in_range(std::size_t v, std::size_t e, int t) const {
    const double d = distance_to(v, e, t);
    return !std::isnan(d) && d <= sc_.edges()[e].radio_range_m;
  }
  int serving_edge(std::size_t v, int t) const { return serving_[v * T() + static_cast<std::size_t>(t)]; }
  double predicted_distance(std::size_t v, int t) const { return predicted_[v * T() + static_cast<std::size_t>(t)]; }
  double required_bits(std::size_t v, int t) const { return required_[v * T() + static_cast<std::size_t>(t)]; }

  /// Vehicle indices served by edge `e` at t, in index order.
  std::vector<std::size_t> served_by(std::size_t e, int t) const {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < vehicle_count(); ++v)
      if (serving_edge(v, t) == static_cast<int>(e)) out.push_back(v);
    return out;
  }

  std::vector<int> served_ids(std::size_t e, int t) const {
    std::vector<int> ids;
    for (std::size_t v : served_by(e, t)) ids.push_back(sc_.vehicles()[v].id);
    return ids;
  }

  double snr(const EpisodeChannel& ch, std::size_t v, std::size_t e, int t) const {
    const double d = distance_to(v, e, t);
    if (std::isnan(d)) return 0.0;
    return channel::snr(d, ch.links[v][e].fading[static_cast<std::size_t>(t)], sc_.vehicles()[v].tx_power_mw,
                        sc_.config().channel);
  }

  /// Rank-based allocation of edge `e` at slot t.
  policy::EdgeAction rank_allocation(std::size_t e, int t) const {
    std::vector<policy::RankEntry> entries;
    std::vector<int> ids;
    for (std::size_t v : served_by(e, t)) {
      entries.push_back({sc_.vehicles()[v].id, required_bits(v, t), predicted_distance(v, t)});
      ids.push_back(sc_.vehicles()[v].id);
    }
    const auto ranks = policy::rank_vehicles(entries);
    return policy::allocate_bandwidth(ids, ranks, sc_.edges()[e].bandwidth_hz, sc_.config().bandwidth_omega);
  }

  EpisodeState initial_state() const {
    EpisodeState s;
    for (const auto& v : sc_.vehicles()) s.frequency_level.emplace_back(v.sensible_types.size(), 0.0);
    s.receipts.resize(edge_count());
    return s;
  }

  /// Freshness of the edge's newest cached copy of `type` at time t:
  /// 1 - age/|T|, clamped at 0; 0 when never received.
  double cache_freshness(const EpisodeState& s, std::size_t e, int type, int t) const {
    double best = 0.0;
    for (const auto& [d, when] : s.receipts[e])
      if (d == type && when <= t) best = std::max(best, 1.0 - (t - when) / static_cast<double>(horizon()));
    return std::clamp(best, 0.0, 1.0);
  }

  /// Service time moments of each sensible type of vehicle v at slot t
  /// given bandwidth b on edge e.
  void service_moments(const EpisodeChannel& ch, std::size_t v, std::size_t e, int t, double bandwidth,
                       std::vector<double>& means, std::vector<double>& variances) const {
    const auto& veh = sc_.vehicles()[v];
    const auto& p = sc_.config().channel;
    means.assign(veh.sensible_types.size(), std::numeric_limits<double>::infinity());
    variances.assign(veh.sensible_types.size(), std::numeric_limits<double>::infinity());
    const double d = distance_to(v, e, t);
    if (std::isnan(d)) return;
    const double gain_free = channel::snr(d, 1.0, veh.tx_power_mw, p);
    const double h = ch.links[v][e].fading[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < veh.sensible_types.size(); ++i) {
      const auto m = channel::service_moments(static_cast<double>(sc_.data_size(veh.sensible_types[i])), bandwidth,
                                              gain_free, h, p.fading_variance);
      means[i] = m.mean;
      variances[i] = m.variance;
    }
  }

  SlotOutcome step(const EpisodeChannel& ch, EpisodeState& state, int t, const SlotDecision& decision) const {
    const std::size_t nv = vehicle_count(), ne = edge_count();
    const int H = horizon();
    SlotOutcome out;
    out.slot = t;
    out.vehicles.resize(nv);
    out.uploads.resize(ne);
    out.scores.resize(ne);
    out.difference_rewards.assign(nv, 0.0);

    for (std::size_t v = 0; v < nv; ++v) {
      const auto& veh = sc_.vehicles()[v];
      auto& vs = out.vehicles[v];
      vs.edge = serving_edge(v, t);
      if (vs.edge >= 0) {
        const auto e = static_cast<std::size_t>(vs.edge);
        for (const auto& a : decision.edge_actions[e].allocations)
          if (a.vehicle == veh.id) vs.bandwidth_hz = a.bandwidth_hz;
        service_moments(ch, v, e, t, vs.bandwidth_hz, vs.service_means, vs.service_variances);
      } else {
        vs.service_means.assign(veh.sensible_types.size(), std::numeric_limits<double>::infinity());
        vs.service_variances = vs.service_means;
      }
      vs.action = policy::decode_action(decision.raw[v], veh, vs.service_means);

      for (std::size_t i = 0; i < veh.sensible_types.size(); ++i) {
        const auto& st = vs.action.settings[i];
        const auto& b = veh.freq_bounds[i];
        state.frequency_level[v][i] =
            st.active && b.max_hz > b.min_hz ? (st.frequency_hz - b.min_hz) / (b.max_hz - b.min_hz) : 0.0;
      }
      if (vs.edge < 0) continue;
      const auto e = static_cast<std::size_t>(vs.edge);

      std::vector<queueing::QueueClass> classes;
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < veh.sensible_types.size(); ++i) {
        const auto& st = vs.action.settings[i];
        if (!st.active) continue;
        classes.push_back({st.frequency_hz, vs.service_means[i], vs.service_variances[i], st.priority});
        idx.push_back(i);
      }
      const auto& link = ch.links[v][e];
      auto rate = [&](int slot) {
        if (slot >= H || !in_range(v, e, slot)) return 0.0;
        return channel::transmission_rate(vs.bandwidth_hz, snr(ch, v, e, slot));
      };
      auto snr_at = [&](int slot) { return snr(ch, v, e, slot); };
      auto covered = [&](int slot) { return slot < H && in_range(v, e, slot); };
      for (std::size_t c = 0; c < classes.size(); ++c) {
        const int type = veh.sensible_types[idx[c]];
        const double q = queueing::queuing_time(classes, c);
        vs.queuing.push_back(q);
        fusion::ReceivedInfo info;
        info.type = type;
        info.vehicle = veh.id;
        info.interarrival = queueing::interarrival_time(classes[c].arrival_rate);
        info.queuing = q;
        const double start = t + q;
        const auto g = channel::transmission_time(static_cast<double>(sc_.data_size(type)), start, rate, H);
        if (g) {
          info.transmission = *g;
          info.success = channel::transmission_success(start, *g, snr_at, covered, link.snr_wall, H);
        } else {
          info.transmission = std::max(0.0, H - start);
          info.success = false;
        }
        out.uploads[e].push_back(info);
        if (info.success) state.receipts[e].emplace_back(type, start + info.transmission);
      }
    }

    for (std::size_t e = 0; e < ne; ++e)
      for (const auto& view : sc_.edge_views(e))
        out.scores[e].push_back(fusion::score_view(view, out.uploads[e], sc_.config().fusion, H));
    out.reward = reward_of(out.scores);

    for (std::size_t v = 0; v < nv; ++v) out.difference_rewards[v] = difference_reward(out, v);
    return out;
  }

  /// Mean complement of AoV over every view of every edge.
  static double reward_of(const std::vector<std::vector<fusion::ViewScore>>& scores) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& per_edge : scores)
      for (const auto& s : per_edge) {
        sum += 1.0 - s.aov;
        ++n;
      }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }

  /// System reward minus the reward with vehicle v's successful uploads
  /// removed and every view re-scored. Exactly 0 when v delivered nothing.
  double difference_reward(const SlotOutcome& out, std::size_t v) const {
    const int e = out.vehicles[v].edge;
    if (e < 0) return 0.0;
    const int id = sc_.vehicles()[v].id;
    const auto& uploads = out.uploads[static_cast<std::size_t>(e)];
    std::vector<fusion::ReceivedInfo> without;
    bool contributed = false;
    for (const auto& u : uploads) {
      if (u.vehicle == id && u.success) {
        contributed = true;
        continue;
      }
      without.push_back(u);
    }
    if (!contributed) return 0.0;
    auto scores = out.scores;
    auto& edge_scores = scores[static_cast<std::size_t>(e)];
    const auto& views = sc_.edge_views(static_cast<std::size_t>(e));
    for (std::size_t k = 0; k < views.size(); ++k)
      edge_scores[k] = fusion::score_view(views[k], without, sc_.config().fusion, horizon());
    return out.reward - reward_of(scores);
  }

 private:
  std::size_t T() const { return static_cast<std::size_t>(sc_.horizon()); }
  std::size_t index(std::size_t v, std::size_t e, int t) const {
    return (v * edge_count() + e) * T() + static_cast<std::size_t>(t);
  }

  void precompute() {
    const std::size_t nv = vehicle_count(), ne = edge_count();
    const int H = horizon();
    const auto& cfg = sc_.config();
    dist_.assign(nv * ne * T(), std::numeric_limits<double>::quiet_NaN());
    serving_.assign(nv * T(), -1);
    predicted_.assign(nv * T(), 0.0);
    required_.assign(nv * T(), 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& veh = sc_.vehicles()[v];
      for (int t = 0; t < H; ++t) {
        if (!veh.trajectory.present(t)) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e < ne; ++e) {
          const double d = distance(veh, sc_.edges()[e], t);
          dist_[index(v, e, t)] = d;
          if (d <= sc_.edges()[e].radio_range_m && d < best) {
            best = d;
            serving_[v * T() + static_cast<std::size_t>(t)] = static_cast<int>(e);
          }
        }
      }
      // Distance-trend prediction over the run of slots served by the same edge.
      std::vector<double> increments;
      int run_edge = -1;
      for (int t = 0; t < H; ++t) {
        const int e = serving_[v * T() + static_cast<std::size_t>(t)];
        if (e != run_edge) increments.clear();
        else if (e >= 0)
          increments.push_back(dist_[index(v, static_cast<std::size_t>(e), t)] -
                               dist_[index(v, static_cast<std::size_t>(e), t - 1)]);
        run_edge = e;
        if (e < 0) continue;
        const double now = dist_[index(v, static_cast<std::size_t>(e), t)];
        double inc = 0.0;
        if (!increments.empty()) {
          const auto model = mobility::em_fit(increments, cfg.mobility.components, cfg.mobility.tolerance,
                                              cfg.mobility.max_iterations);
          inc = mobility::predicted_increment(model, increments.back());
        }
        predicted_[v * T() + static_cast<std::size_t>(t)] =
            mobility::predict_avg_distance(now, inc, cfg.prediction_horizon);
        required_[v * T() + static_cast<std::size_t>(t)] =
            policy::required_info_size(veh.sensible_types, sc_.edge_views(static_cast<std::size_t>(e)), sc_);
      }
    }
  }

  Scenario sc_;
  std::vector<double> dist_;
  std::vector<int> serving_;
  std::vector<double> predicted_;
  std::vector<double> required_;
};

}  // namespace vcps::sim
