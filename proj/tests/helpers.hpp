#pragma once

#include <vector>

#include "vcps/model.hpp"

namespace vcps::testing {

inline Track stationary(Vec2 p, int slots, int start = 0) {
  Track t;
  t.start_slot = start;
  t.positions.assign(static_cast<std::size_t>(slots), p);
  return t;
}

inline VehicleState vehicle(int id, std::vector<int> types, Track traj, double lo = 0.5, double hi = 2.0) {
  VehicleState s;
  s.id = id;
  s.sensible_types = std::move(types);
  s.freq_bounds.assign(s.sensible_types.size(), {lo, hi});
  s.trajectory = std::move(traj);
  return s;
}

/// Three types, two views, two parked vehicles near one edge.
inline ScenarioConfig tiny_config(int horizon = 10) {
  ScenarioConfig c;
  c.horizon = horizon;
  c.catalog = {{0, 1'000'000}, {1, 2'000'000}, {2, 500'000}};
  c.views = {{0, {0, 1}}, {1, {1, 2}}};
  c.vehicles = {vehicle(0, {0, 1}, stationary({100, 0}, horizon)), vehicle(1, {1, 2}, stationary({0, 150}, horizon))};
  EdgeState e;
  e.id = 0;
  e.location = {0, 0};
  e.radio_range_m = 500;
  e.bandwidth_hz = 3e6;
  e.required_views = {0, 1};
  c.edges = {e};
  c.training.batch_size = 16;
  c.training.buffer_capacity = 1000;
  c.training.actor_hidden = {8};
  c.training.critic_hidden = {8};
  c.max_views = 2;
  return c;
}

}  // namespace vcps::testing
