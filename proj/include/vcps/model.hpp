#pragma once

// Domain types shared by every module: the information catalog, vehicles,
// edge nodes, views, and the validated scenario with its lookup tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcps {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double euclidean(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// One kind of sensed datum; `id` indexes the catalog.
struct InformationType {
  int id = 0;
  std::int64_t data_size_bits = 0;
  friend bool operator==(const InformationType&, const InformationType&) = default;
};

/// Positions at consecutive 1-second slots starting at `start_slot`.
struct Track {
  int start_slot = 0;
  std::vector<Vec2> positions;

  int end_slot() const { return start_slot + static_cast<int>(positions.size()); }
  bool present(int t) const { return t >= start_slot && t < end_slot(); }
  std::optional<Vec2> at(int t) const {
    if (!present(t)) return std::nullopt;
    return positions[static_cast<std::size_t>(t - start_slot)];
  }
  friend bool operator==(const Track&, const Track&) = default;
};

struct FrequencyBounds {
  double min_hz = 0.0;
  double max_hz = 0.0;
  friend bool operator==(const FrequencyBounds&, const FrequencyBounds&) = default;
};

struct VehicleState {
  int id = 0;
  Track trajectory;
  std::vector<int> sensible_types;           // D_s
  std::vector<FrequencyBounds> freq_bounds;  // parallel to sensible_types
  double tx_power_mw = 1.0;
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ViewSpec {
  int id = 0;
  std::vector<int> required;  // sorted catalog ids with y_{d,v} = 1

  bool requires_type(int type) const { return std::binary_search(required.begin(), required.end(), type); }
  friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

struct EdgeState {
  int id = 0;
  Vec2 location;
  double radio_range_m = 0.0;
  double bandwidth_hz = 0.0;
  std::vector<int> required_views;  // view ids
  friend bool operator==(const EdgeState&, const EdgeState&) = default;
};

struct ChannelParams {
  double noise_dbm = -90.0;
  double path_loss_exponent = 3.0;
  double antenna_constant = 1.0;
  double fading_mean = 2.0;
  double fading_variance = 0.4;
  double noise_uncertainty_min_db = 0.0;
  double noise_uncertainty_max_db = 3.0;
  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

struct AovWeights {
  double timeliness = 0.3;
  double completeness = 0.4;
  double consistency = 0.3;
  friend bool operator==(const AovWeights&, const AovWeights&) = default;
};

struct FusionParams {
  AovWeights weights;
  double delta_xi = 1.0;
  double delta_psi = 1.0;
  friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

struct MobilityParams {
  int components = 2;
  double tolerance = 1e-6;
  int max_iterations = 200;
  friend bool operator==(const MobilityParams&, const MobilityParams&) = default;
};

struct TrainingParams {
  double gamma = 0.996;
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  double soft_update = 0.005;
  double noise_std = 0.2;
  double noise_decay = 0.999;
  double noise_floor = 0.01;
  int iterations = 2000;
  std::vector<int> actor_hidden{64, 32};
  std::vector<int> critic_hidden{128, 64};
  double bandwidth_temperature = 8.0;  // C-DDPG softmax sharpness
  friend bool operator==(const TrainingParams&, const TrainingParams&) = default;
};

struct ScenarioConfig {
  int horizon = 1;
  std::vector<InformationType> catalog;
  std::vector<ViewSpec> views;
  std::vector<VehicleState> vehicles;
  std::vector<EdgeState> edges;
  ChannelParams channel;
  FusionParams fusion;
  MobilityParams mobility;
  TrainingParams training;
  double bandwidth_omega = 1.0;
  int prediction_horizon = 5;
  double phi_threshold = 0.8;
  int max_views = 10;
  std::uint64_t seed = 1;
  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(const std::string& path, const std::string& what)
      : std::invalid_argument(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A validated, immutable scenario. Only constructible through
/// validate_scenario, so holders can rely on every invariant.
class Scenario {
 public:
  const ScenarioConfig& config() const { return cfg_; }
  int horizon() const { return cfg_.horizon; }
  std::size_t catalog_size() const { return cfg_.catalog.size(); }
  std::int64_t data_size(int type) const { return cfg_.catalog[static_cast<std::size_t>(type)].data_size_bits; }
  const std::vector<VehicleState>& vehicles() const { return cfg_.vehicles; }
  const std::vector<EdgeState>& edges() const { return cfg_.edges; }
  const ViewSpec& view(int id) const { return cfg_.views[view_index_.at(static_cast<std::size_t>(id))]; }
  /// Views required by edge `e` (index into edges()).
  const std::vector<ViewSpec>& edge_views(std::size_t e) const { return edge_views_[e]; }
  /// Union of the types required by edge `e`'s views, as a catalog indicator.
  const std::vector<bool>& edge_required_types(std::size_t e) const { return edge_required_[e]; }

  friend Scenario validate_scenario(const ScenarioConfig& cfg);

 private:
  ScenarioConfig cfg_;
  std::vector<std::size_t> view_index_;  // view id -> position in cfg_.views
  std::vector<std::vector<ViewSpec>> edge_views_;
  std::vector<std::vector<bool>> edge_required_;
};

namespace detail {

inline std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ScenarioError(path, what);
}

}  // namespace detail

inline Scenario validate_scenario(const ScenarioConfig& cfg) {
  using detail::at;
  using detail::require;

  require(cfg.horizon >= 1, "horizon", "must be at least 1");
  require(!cfg.catalog.empty(), "catalog", "must not be empty");
  const std::size_t n_types = cfg.catalog.size();
  std::vector<bool> seen(n_types, false);
  for (std::size_t i = 0; i < n_types; ++i) {
    const auto& d = cfg.catalog[i];
    require(d.id >= 0 && static_cast<std::size_t>(d.id) < n_types, at("catalog", i) + ".id",
            "must index the catalog (0.." + std::to_string(n_types - 1) + ")");
    require(!seen[static_cast<std::size_t>(d.id)], at("catalog", i) + ".id", "duplicate id " + std::to_string(d.id));
    seen[static_cast<std::size_t>(d.id)] = true;
    require(d.data_size_bits > 0, at("catalog", i) + ".data_size", "must be positive");
  }
  auto valid_type = [&](int t) { return t >= 0 && static_cast<std::size_t>(t) < n_types; };

  const auto& w = cfg.fusion.weights;
  require(w.timeliness >= 0 && w.completeness >= 0 && w.consistency >= 0, "aov.weights", "weights must be non-negative");
  require(std::abs(w.timeliness + w.completeness + w.consistency - 1.0) <= 1e-9, "aov.weights",
          "weights must sum to 1");
  require(cfg.fusion.delta_xi > 0, "aov.delta_xi", "must be positive");
  require(cfg.fusion.delta_psi > 0, "aov.delta_psi", "must be positive");

  require(cfg.channel.path_loss_exponent > 0, "channel.path_loss_exponent", "must be positive");
  require(std::isfinite(cfg.channel.noise_dbm), "channel.noise_dbm", "must be finite");
  require(cfg.channel.antenna_constant > 0, "channel.antenna_constant", "must be positive");
  require(cfg.channel.fading_variance >= 0, "channel.fading_variance", "must be non-negative");
  require(cfg.channel.noise_uncertainty_min_db >= 0, "channel.noise_uncertainty_db", "must be non-negative");
  require(cfg.channel.noise_uncertainty_max_db >= cfg.channel.noise_uncertainty_min_db,
          "channel.noise_uncertainty_db", "range must be ordered");

  require(cfg.bandwidth_omega >= 0, "bandwidth_omega", "must be non-negative");
  require(cfg.prediction_horizon >= 1, "prediction_horizon", "must be at least 1");
  require(cfg.phi_threshold >= 0 && cfg.phi_threshold <= 1, "phi_threshold", "must lie in [0, 1]");
  require(cfg.max_views >= 1, "max_views", "must be at least 1");
  require(cfg.mobility.components >= 1, "mobility.components", "must be at least 1");
  require(cfg.mobility.tolerance > 0, "mobility.tolerance", "must be positive");
  require(cfg.mobility.max_iterations >= 1, "mobility.max_iterations", "must be at least 1");

  const auto& tr = cfg.training;
  require(tr.gamma >= 0 && tr.gamma <= 1, "training.gamma", "must lie in [0, 1]");
  require(tr.batch_size >= 1, "training.batch_size", "must be at least 1");
  require(tr.buffer_capacity >= tr.batch_size, "training.buffer_capacity", "must hold at least one minibatch");
  require(tr.learning_rate > 0, "training.learning_rate", "must be positive");
  require(tr.soft_update > 0 && tr.soft_update <= 1, "training.soft_update", "must lie in (0, 1]");
  require(tr.noise_std >= 0 && tr.noise_floor >= 0, "training.noise_std", "must be non-negative");
  require(tr.noise_decay > 0 && tr.noise_decay <= 1, "training.noise_decay", "must lie in (0, 1]");
  require(tr.iterations >= 1, "training.iterations", "must be at least 1");
  for (std::size_t i = 0; i < tr.actor_hidden.size(); ++i)
    require(tr.actor_hidden[i] >= 1, at("training.actor_hidden", i), "must be positive");
  for (std::size_t i = 0; i < tr.critic_hidden.size(); ++i)
    require(tr.critic_hidden[i] >= 1, at("training.critic_hidden", i), "must be positive");

  Scenario sc;
  sc.cfg_ = cfg;
  std::sort(sc.cfg_.catalog.begin(), sc.cfg_.catalog.end(),
            [](const InformationType& a, const InformationType& b) { return a.id < b.id; });

  int max_view_id = -1;
  for (std::size_t i = 0; i < cfg.views.size(); ++i) {
    const auto& v = cfg.views[i];
    require(v.id >= 0, at("views", i) + ".id", "must be non-negative");
    max_view_id = std::max(max_view_id, v.id);
    require(!v.required.empty(), at("views", i) + ".required", "a view must require at least one type");
    for (std::size_t j = 0; j < v.required.size(); ++j)
      require(valid_type(v.required[j]), at(at("views", i) + ".required", j), "unknown type id");
  }
  sc.view_index_.assign(static_cast<std::size_t>(max_view_id + 1), SIZE_MAX);
  for (std::size_t i = 0; i < cfg.views.size(); ++i) {
    auto& slot = sc.view_index_[static_cast<std::size_t>(cfg.views[i].id)];
    require(slot == SIZE_MAX, at("views", i) + ".id", "duplicate id");
    slot = i;
    auto& req = sc.cfg_.views[i].required;
    std::sort(req.begin(), req.end());
    require(std::adjacent_find(req.begin(), req.end()) == req.end(), at("views", i) + ".required",
            "duplicate type id");
  }

  require(!cfg.vehicles.empty(), "vehicles", "must not be empty");
  for (std::size_t i = 0; i < cfg.vehicles.size(); ++i) {
    const auto& s = cfg.vehicles[i];
    const std::string p = at("vehicles", i);
    for (std::size_t j = 0; j < i; ++j) require(cfg.vehicles[j].id != s.id, p + ".id", "duplicate id");
    require(!s.sensible_types.empty(), p + ".sensible_types", "must not be empty");
    require(s.freq_bounds.size() == s.sensible_types.size(), p + ".freq_bounds",
            "needs one bound pair per sensible type");
    for (std::size_t j = 0; j < s.sensible_types.size(); ++j) {
      require(valid_type(s.sensible_types[j]), at(p + ".sensible_types", j), "unknown type id");
      for (std::size_t k = 0; k < j; ++k)
        require(s.sensible_types[k] != s.sensible_types[j], at(p + ".sensible_types", j), "duplicate type id");
      const auto& b = s.freq_bounds[j];
      require(b.min_hz > 0, at(p + ".freq_bounds", j), "lambda_min must be positive");
      require(b.min_hz <= b.max_hz, at(p + ".freq_bounds", j), "lambda_min must not exceed lambda_max");
    }
    require(s.tx_power_mw >= 0, p + ".tx_power", "must be non-negative");
    require(!s.trajectory.positions.empty(), p + ".trajectory", "must not be empty");
  }

  require(!cfg.edges.empty(), "edges", "must not be empty");
  sc.edge_views_.resize(cfg.edges.size());
  sc.edge_required_.assign(cfg.edges.size(), std::vector<bool>(n_types, false));
  for (std::size_t i = 0; i < cfg.edges.size(); ++i) {
    const auto& e = cfg.edges[i];
    const std::string p = at("edges", i);
    for (std::size_t j = 0; j < i; ++j) require(cfg.edges[j].id != e.id, p + ".id", "duplicate id");
    require(e.radio_range_m > 0, p + ".radio_range", "must be positive");
    require(e.bandwidth_hz > 0, p + ".bandwidth", "must be positive");
    require(!e.required_views.empty(), p + ".required_views", "an edge must require at least one view");
    require(static_cast<int>(e.required_views.size()) <= cfg.max_views, p + ".required_views",
            "more views than max_views (" + std::to_string(cfg.max_views) + ")");
    for (std::size_t j = 0; j < e.required_views.size(); ++j) {
      const int vid = e.required_views[j];
      const bool known = vid >= 0 && static_cast<std::size_t>(vid) < sc.view_index_.size() &&
                         sc.view_index_[static_cast<std::size_t>(vid)] != SIZE_MAX;
      require(known, at(p + ".required_views", j), "unknown view id " + std::to_string(vid));
      for (std::size_t k = 0; k < j; ++k) require(e.required_views[k] != vid, at(p + ".required_views", j), "duplicate view id");
    }
  }
  for (std::size_t i = 0; i < sc.cfg_.edges.size(); ++i) {
    for (int vid : sc.cfg_.edges[i].required_views) {
      const ViewSpec& v = sc.cfg_.views[sc.view_index_[static_cast<std::size_t>(vid)]];
      sc.edge_views_[i].push_back(v);
      for (int d : v.required) sc.edge_required_[i][static_cast<std::size_t>(d)] = true;
    }
  }
  return sc;
}

class OutOfTrajectory : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline double distance(const VehicleState& s, const EdgeState& e, int t) {
  auto pos = s.trajectory.at(t);
  if (!pos)
    throw OutOfTrajectory("vehicle " + std::to_string(s.id) + " has no position at slot " + std::to_string(t));
  return euclidean(*pos, e.location);
}

/// Ids of vehicles within radio range of `e` at slot t (boundary inclusive).
/// Vehicles without a position at t are not covered.
inline std::vector<int> coverage_set(const EdgeState& e, const std::vector<VehicleState>& vehicles, int t) {
  std::vector<int> ids;
  for (const auto& s : vehicles) {
    auto pos = s.trajectory.at(t);
    if (pos && euclidean(*pos, e.location) <= e.radio_range_m) ids.push_back(s.id);
  }
  return ids;
}

}  // namespace vcps
