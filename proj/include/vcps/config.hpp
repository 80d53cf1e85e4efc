#pragma once

// Scenario configuration as JSON: parsing with field-path errors, trajectory
// sources (inline, synthetic, CSV), VCPS_* environment overrides, canonical
// serialization and a stable hash of the resolved configuration.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcps/mobility.hpp"
#include "vcps/model.hpp"

namespace vcps::config {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string join(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }
inline std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

template <class T>
T get(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("wrong type (") + j.type_name() + ")");
  }
}

template <class T>
void read(const json& obj, const std::string& key, const std::string& base, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = get<T>(*it, join(base, key));
}

inline const json& require_key(const json& obj, const std::string& key, const std::string& base) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(base, key), "missing");
  return *it;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "must be an object");
}

inline void require_array(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "must be an array");
}

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(join(path, k), "unknown key");
  }
}

inline Vec2 read_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(path, "must be [x, y]");
  return {get<double>(j[0], at(path, 0)), get<double>(j[1], at(path, 1))};
}

inline Track read_track(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path, {"start_slot", "positions"});
  Track t;
  read(j, "start_slot", path, t.start_slot);
  const auto& pos = require_key(j, "positions", path);
  require_array(pos, join(path, "positions"));
  for (std::size_t i = 0; i < pos.size(); ++i) t.positions.push_back(read_point(pos[i], at(join(path, "positions"), i)));
  return t;
}

}  // namespace detail

/// Resolves relative file references against `base_dir`.
inline ScenarioConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  require_object(j, "");
  check_keys(j, "", {"horizon", "seed", "catalog", "views", "vehicles", "edges", "trajectories", "channel", "aov",
                     "mobility", "training", "bandwidth_omega", "prediction_horizon", "phi_threshold", "max_views"});
  ScenarioConfig c;
  read(j, "horizon", "", c.horizon);
  read(j, "seed", "", c.seed);
  read(j, "bandwidth_omega", "", c.bandwidth_omega);
  read(j, "prediction_horizon", "", c.prediction_horizon);
  read(j, "phi_threshold", "", c.phi_threshold);
  read(j, "max_views", "", c.max_views);

  const auto& cat = require_key(j, "catalog", "");
  require_array(cat, "catalog");
  for (std::size_t i = 0; i < cat.size(); ++i) {
    const auto p = at("catalog", i);
    require_object(cat[i], p);
    check_keys(cat[i], p, {"id", "data_size"});
    InformationType d;
    d.id = get<int>(require_key(cat[i], "id", p), join(p, "id"));
    d.data_size_bits = get<std::int64_t>(require_key(cat[i], "data_size", p), join(p, "data_size"));
    c.catalog.push_back(d);
  }

  const auto& views = require_key(j, "views", "");
  require_array(views, "views");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto p = at("views", i);
    require_object(views[i], p);
    check_keys(views[i], p, {"id", "required"});
    ViewSpec v;
    v.id = get<int>(require_key(views[i], "id", p), join(p, "id"));
    v.required = get<std::vector<int>>(require_key(views[i], "required", p), join(p, "required"));
    c.views.push_back(v);
  }

  const auto& vehicles = require_key(j, "vehicles", "");
  require_array(vehicles, "vehicles");
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    const auto p = at("vehicles", i);
    require_object(vehicles[i], p);
    check_keys(vehicles[i], p, {"id", "sensible_types", "freq_bounds", "tx_power", "trajectory"});
    VehicleState s;
    s.id = get<int>(require_key(vehicles[i], "id", p), join(p, "id"));
    s.sensible_types = get<std::vector<int>>(require_key(vehicles[i], "sensible_types", p), join(p, "sensible_types"));
    const auto& fb = require_key(vehicles[i], "freq_bounds", p);
    require_array(fb, join(p, "freq_bounds"));
    for (std::size_t k = 0; k < fb.size(); ++k) {
      const auto q = at(join(p, "freq_bounds"), k);
      if (!fb[k].is_array() || fb[k].size() != 2) throw ConfigError(q, "must be [min_hz, max_hz]");
      s.freq_bounds.push_back({get<double>(fb[k][0], q), get<double>(fb[k][1], q)});
    }
    read(vehicles[i], "tx_power", p, s.tx_power_mw);
    if (auto it = vehicles[i].find("trajectory"); it != vehicles[i].end()) s.trajectory = read_track(*it, join(p, "trajectory"));
    c.vehicles.push_back(std::move(s));
  }

  const auto& edges = require_key(j, "edges", "");
  require_array(edges, "edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto p = at("edges", i);
    require_object(edges[i], p);
    check_keys(edges[i], p, {"id", "location", "radio_range", "bandwidth", "required_views"});
    EdgeState e;
    e.id = get<int>(require_key(edges[i], "id", p), join(p, "id"));
    e.location = read_point(require_key(edges[i], "location", p), join(p, "location"));
    e.radio_range_m = get<double>(require_key(edges[i], "radio_range", p), join(p, "radio_range"));
    e.bandwidth_hz = get<double>(require_key(edges[i], "bandwidth", p), join(p, "bandwidth"));
    e.required_views = get<std::vector<int>>(require_key(edges[i], "required_views", p), join(p, "required_views"));
    c.edges.push_back(std::move(e));
  }

  if (auto it = j.find("channel"); it != j.end()) {
    const std::string p = "channel";
    require_object(*it, p);
    check_keys(*it, p, {"noise_dbm", "path_loss_exponent", "antenna_constant", "fading_mean", "fading_variance",
                        "noise_uncertainty_db"});
    auto& ch = c.channel;
    read(*it, "noise_dbm", p, ch.noise_dbm);
    read(*it, "path_loss_exponent", p, ch.path_loss_exponent);
    read(*it, "antenna_constant", p, ch.antenna_constant);
    read(*it, "fading_mean", p, ch.fading_mean);
    read(*it, "fading_variance", p, ch.fading_variance);
    if (auto n = it->find("noise_uncertainty_db"); n != it->end()) {
      if (!n->is_array() || n->size() != 2) throw ConfigError("channel.noise_uncertainty_db", "must be [min_db, max_db]");
      ch.noise_uncertainty_min_db = get<double>((*n)[0], "channel.noise_uncertainty_db[0]");
      ch.noise_uncertainty_max_db = get<double>((*n)[1], "channel.noise_uncertainty_db[1]");
    }
  }

  if (auto it = j.find("aov"); it != j.end()) {
    const std::string p = "aov";
    require_object(*it, p);
    check_keys(*it, p, {"weights", "delta_xi", "delta_psi"});
    if (auto w = it->find("weights"); w != it->end()) {
      if (!w->is_array() || w->size() != 3) throw ConfigError("aov.weights", "must be [w1, w2, w3]");
      c.fusion.weights = {get<double>((*w)[0], "aov.weights[0]"), get<double>((*w)[1], "aov.weights[1]"),
                          get<double>((*w)[2], "aov.weights[2]")};
    }
    read(*it, "delta_xi", p, c.fusion.delta_xi);
    read(*it, "delta_psi", p, c.fusion.delta_psi);
  }

  if (auto it = j.find("mobility"); it != j.end()) {
    const std::string p = "mobility";
    require_object(*it, p);
    check_keys(*it, p, {"components", "tolerance", "max_iterations"});
    read(*it, "components", p, c.mobility.components);
    read(*it, "tolerance", p, c.mobility.tolerance);
    read(*it, "max_iterations", p, c.mobility.max_iterations);
  }

  if (auto it = j.find("training"); it != j.end()) {
    const std::string p = "training";
    require_object(*it, p);
    check_keys(*it, p, {"gamma", "buffer_capacity", "batch_size", "learning_rate", "soft_update", "noise_std",
                        "noise_decay", "noise_floor", "iterations", "actor_hidden", "critic_hidden",
                        "bandwidth_temperature"});
    auto& t = c.training;
    read(*it, "gamma", p, t.gamma);
    read(*it, "buffer_capacity", p, t.buffer_capacity);
    read(*it, "batch_size", p, t.batch_size);
    read(*it, "learning_rate", p, t.learning_rate);
    read(*it, "soft_update", p, t.soft_update);
    read(*it, "noise_std", p, t.noise_std);
    read(*it, "noise_decay", p, t.noise_decay);
    read(*it, "noise_floor", p, t.noise_floor);
    read(*it, "iterations", p, t.iterations);
    read(*it, "actor_hidden", p, t.actor_hidden);
    read(*it, "critic_hidden", p, t.critic_hidden);
    read(*it, "bandwidth_temperature", p, t.bandwidth_temperature);
  }

  // Vehicles without an inline trajectory take theirs from the source.
  if (auto it = j.find("trajectories"); it != j.end()) {
    const std::string p = "trajectories";
    require_object(*it, p);
    check_keys(*it, p, {"synthetic", "csv", "start_timestamp"});
    mobility::TrajectoryTable table;
    bool by_index = false;
    if (auto s = it->find("synthetic"); s != it->end()) {
      const std::string q = "trajectories.synthetic";
      require_object(*s, q);
      check_keys(*s, q, {"area_side", "speed_mean", "speed_variance", "dwell_mean", "dwell_variance", "seed"});
      mobility::SynthOptions o;
      o.n_vehicles = static_cast<int>(c.vehicles.size());
      o.horizon = c.horizon;
      o.seed = c.seed;
      read(*s, "area_side", q, o.area_side_m);
      read(*s, "speed_mean", q, o.speed.mean);
      read(*s, "speed_variance", q, o.speed.variance);
      read(*s, "dwell_mean", q, o.dwell.mean);
      read(*s, "dwell_variance", q, o.dwell.variance);
      read(*s, "seed", q, o.seed);
      try {
        table = mobility::synth_trajectories(o);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(q, e.what());
      }
      by_index = true;
    } else if (auto f = it->find("csv"); f != it->end()) {
      std::filesystem::path file = get<std::string>(*f, "trajectories.csv");
      if (file.is_relative()) file = base_dir / file;
      mobility::LoadOptions lo;
      lo.horizon = c.horizon;
      if (auto ts = it->find("start_timestamp"); ts != it->end())
        lo.start_timestamp = get<std::int64_t>(*ts, "trajectories.start_timestamp");
      std::ifstream in(file);
      if (!in) throw IoError("cannot open trajectory file " + file.string());
      try {
        table = mobility::parse_trajectories(in, lo);
      } catch (const mobility::TrajectoryError& e) {
        throw ConfigError("trajectories.csv", file.string() + ": " + e.what());
      }
    } else {
      throw ConfigError(p, "needs either 'synthetic' or 'csv'");
    }
    for (std::size_t i = 0; i < c.vehicles.size(); ++i) {
      auto& s = c.vehicles[i];
      if (!s.trajectory.positions.empty()) continue;
      const int key = by_index ? static_cast<int>(i) : s.id;
      auto t = table.tracks.find(key);
      if (t == table.tracks.end())
        throw ConfigError(at("vehicles", i) + ".trajectory", "no trajectory for vehicle " + std::to_string(s.id));
      s.trajectory = t->second;
    }
  }
  return c;
}

/// Canonical form with every field explicit and trajectories inline.
inline json to_json(const ScenarioConfig& c) {
  json j;
  j["horizon"] = c.horizon;
  j["seed"] = c.seed;
  j["bandwidth_omega"] = c.bandwidth_omega;
  j["prediction_horizon"] = c.prediction_horizon;
  j["phi_threshold"] = c.phi_threshold;
  j["max_views"] = c.max_views;
  j["catalog"] = json::array();
  for (const auto& d : c.catalog) j["catalog"].push_back({{"id", d.id}, {"data_size", d.data_size_bits}});
  j["views"] = json::array();
  for (const auto& v : c.views) j["views"].push_back({{"id", v.id}, {"required", v.required}});
  j["vehicles"] = json::array();
  for (const auto& s : c.vehicles) {
    json fb = json::array();
    for (const auto& b : s.freq_bounds) fb.push_back({b.min_hz, b.max_hz});
    json pos = json::array();
    for (const auto& p : s.trajectory.positions) pos.push_back({p.x, p.y});
    j["vehicles"].push_back({{"id", s.id},
                             {"sensible_types", s.sensible_types},
                             {"freq_bounds", fb},
                             {"tx_power", s.tx_power_mw},
                             {"trajectory", {{"start_slot", s.trajectory.start_slot}, {"positions", pos}}}});
  }
  j["edges"] = json::array();
  for (const auto& e : c.edges)
    j["edges"].push_back({{"id", e.id},
                          {"location", {e.location.x, e.location.y}},
                          {"radio_range", e.radio_range_m},
                          {"bandwidth", e.bandwidth_hz},
                          {"required_views", e.required_views}});
  const auto& ch = c.channel;
  j["channel"] = {{"noise_dbm", ch.noise_dbm},
                  {"path_loss_exponent", ch.path_loss_exponent},
                  {"antenna_constant", ch.antenna_constant},
                  {"fading_mean", ch.fading_mean},
                  {"fading_variance", ch.fading_variance},
                  {"noise_uncertainty_db", {ch.noise_uncertainty_min_db, ch.noise_uncertainty_max_db}}};
  const auto& w = c.fusion.weights;
  j["aov"] = {{"weights", {w.timeliness, w.completeness, w.consistency}},
              {"delta_xi", c.fusion.delta_xi},
              {"delta_psi", c.fusion.delta_psi}};
  j["mobility"] = {{"components", c.mobility.components},
                   {"tolerance", c.mobility.tolerance},
                   {"max_iterations", c.mobility.max_iterations}};
  const auto& t = c.training;
  j["training"] = {{"gamma", t.gamma},
                   {"buffer_capacity", t.buffer_capacity},
                   {"batch_size", t.batch_size},
                   {"learning_rate", t.learning_rate},
                   {"soft_update", t.soft_update},
                   {"noise_std", t.noise_std},
                   {"noise_decay", t.noise_decay},
                   {"noise_floor", t.noise_floor},
                   {"iterations", t.iterations},
                   {"actor_hidden", t.actor_hidden},
                   {"critic_hidden", t.critic_hidden},
                   {"bandwidth_temperature", t.bandwidth_temperature}};
  return j;
}

/// 64-bit FNV-1a over the canonical JSON text, as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Applies overrides of the form VCPS_TRAINING__ITERATIONS=100: the prefix is
/// stripped, "__" separates nesting levels, keys are lower-cased and numeric
/// segments index arrays. Values parse as JSON, falling back to a string.
inline void apply_overrides(json& j, const std::map<std::string, std::string>& vars,
                            const std::string& prefix = "VCPS_") {
  for (const auto& [name, value] : vars) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::string rest = name.substr(prefix.size());
    std::vector<std::string> parts;
    for (std::size_t pos = 0;;) {
      const auto next = rest.find("__", pos);
      parts.push_back(rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 2;
    }
    json* node = &j;
    std::string path;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      std::string key = parts[i];
      for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (key.empty()) throw ConfigError(name, "empty key segment in override");
      const bool last = i + 1 == parts.size();
      if (node->is_array()) {
        std::size_t idx = 0;
        try {
          idx = std::stoul(key);
        } catch (const std::exception&) {
          throw ConfigError(path, "override " + name + " needs a numeric index here");
        }
        if (idx >= node->size()) throw ConfigError(detail::at(path, idx), "override index out of range");
        path = detail::at(path, idx);
        node = &(*node)[idx];
      } else {
        if (!node->is_object() && !node->is_null()) throw ConfigError(path, "override " + name + " descends into a scalar");
        path = detail::join(path, key);
        node = &(*node)[key];
      }
      if (last) {
        json v = json::parse(value, nullptr, false);
        *node = v.is_discarded() ? json(value) : v;
      }
    }
  }
}

/// Every VCPS_* variable of the process environment.
inline std::map<std::string, std::string> environment_overrides(char** envp) {
  std::map<std::string, std::string> out;
  if (!envp) return out;
  for (char** e = envp; *e; ++e) {
    std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    if (kv.rfind("VCPS_", 0) == 0) out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

/// Reads, overrides and parses a config file.
inline ScenarioConfig load_config(const std::filesystem::path& path, const std::map<std::string, std::string>& overrides = {}) {
  json j = read_json_file(path);
  apply_overrides(j, overrides);
  return parse_config(j, path.parent_path());
}

}  // namespace vcps::config
