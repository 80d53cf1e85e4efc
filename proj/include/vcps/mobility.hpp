#pragma once

// Trajectory ingestion and generation, and distance-trend prediction with a
// one-dimensional Gaussian mixture fitted by EM to per-slot distance
// increments.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcps/model.hpp"
#include "vcps/rng.hpp"

namespace vcps::mobility {

struct TrajectoryTable {
  std::map<int, Track> tracks;
  std::map<int, std::string> labels;  // original id text, when ids were not numeric
  std::vector<std::string> warnings;

  friend bool operator==(const TrajectoryTable& a, const TrajectoryTable& b) {
    return a.tracks == b.tracks && a.labels == b.labels;
  }
};

class TrajectoryError : public std::runtime_error {
 public:
  TrajectoryError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct LoadOptions {
  std::optional<std::int64_t> start_timestamp;  // slot 0; defaults to the earliest timestamp
  std::optional<int> horizon;                   // clip to [0, horizon)
};

inline constexpr const char* kGeoHeader = "vehicle_id,timestamp,longitude,latitude";
inline constexpr const char* kPlanarHeader = "vehicle_id,timestamp,x,y";

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  if (s.empty()) return false;
  std::istringstream ss(s);
  ss >> out;
  return !ss.fail() && ss.eof();
}

struct Sample {
  std::int64_t timestamp;
  double a;
  double b;
};

}  // namespace detail

/// Parses `vehicle_id,timestamp,longitude,latitude` (projected to local
/// metres, equirectangular about the bounding-box centre) or
/// `vehicle_id,timestamp,x,y` (metres, passed through), then resamples each
/// vehicle to 1 Hz by linear interpolation.
inline TrajectoryTable parse_trajectories(std::istream& in, const LoadOptions& opts = {}) {
  std::string line;
  std::size_t line_no = 0;
  bool geo = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == kGeoHeader) geo = true;
    else if (line != kPlanarHeader)
      throw TrajectoryError(line_no, "unrecognized header '" + line + "'");
    break;
  }
  if (line_no == 0) throw TrajectoryError(0, "empty file");

  std::map<std::string, std::vector<detail::Sample>> raw;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 4) throw TrajectoryError(line_no, "expected 4 fields, got " + std::to_string(f.size()));
    detail::Sample s{};
    if (f[0].empty()) throw TrajectoryError(line_no, "empty vehicle_id");
    if (!detail::parse_number(f[1], s.timestamp)) throw TrajectoryError(line_no, "bad timestamp '" + f[1] + "'");
    if (!detail::parse_number(f[2], s.a) || !std::isfinite(s.a))
      throw TrajectoryError(line_no, "bad coordinate '" + f[2] + "'");
    if (!detail::parse_number(f[3], s.b) || !std::isfinite(s.b))
      throw TrajectoryError(line_no, "bad coordinate '" + f[3] + "'");
    auto [it, inserted] = raw.try_emplace(f[0]);
    if (inserted) order.push_back(f[0]);
    if (!it->second.empty() && s.timestamp <= it->second.back().timestamp)
      throw TrajectoryError(line_no, "out-of-order timestamp for vehicle " + f[0]);
    it->second.push_back(s);
  }

  TrajectoryTable table;
  if (raw.empty()) return table;

  double min_a = std::numeric_limits<double>::infinity(), max_a = -min_a;
  double min_b = min_a, max_b = -min_a;
  std::int64_t t0 = std::numeric_limits<std::int64_t>::max();
  for (const auto& [id, samples] : raw)
    for (const auto& s : samples) {
      min_a = std::min(min_a, s.a), max_a = std::max(max_a, s.a);
      min_b = std::min(min_b, s.b), max_b = std::max(max_b, s.b);
      t0 = std::min(t0, s.timestamp);
    }
  if (opts.start_timestamp) t0 = *opts.start_timestamp;

  constexpr double earth_radius = 6371000.0;
  constexpr double deg = std::numbers::pi / 180.0;
  const double lon0 = 0.5 * (min_a + max_a);
  const double lat0 = 0.5 * (min_b + max_b);
  auto to_plane = [&](double a, double b) -> Vec2 {
    if (!geo) return {a, b};
    return {earth_radius * (a - lon0) * deg * std::cos(lat0 * deg), earth_radius * (b - lat0) * deg};
  };

  bool numeric = true;
  for (const auto& id : order) {
    int v = 0;
    if (!detail::parse_number(id, v)) numeric = false;
  }

  int next_id = 0;
  for (const auto& label : order) {
    const auto& samples = raw.at(label);
    int id = next_id++;
    if (numeric) detail::parse_number(label, id);
    else table.labels[id] = label;
    if (samples.size() < 2) {
      table.warnings.push_back("vehicle " + label + " has a single sample and was dropped");
      continue;
    }
    Track track;
    bool started = false;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
      const auto& p = samples[i];
      const auto& q = samples[i + 1];
      const Vec2 a = to_plane(p.a, p.b), b = to_plane(q.a, q.b);
      const std::int64_t last = (i + 2 == samples.size()) ? q.timestamp : q.timestamp - 1;
      for (std::int64_t ts = p.timestamp; ts <= last; ++ts) {
        const std::int64_t slot = ts - t0;
        if (slot < 0 || (opts.horizon && slot >= *opts.horizon)) continue;
        const double u = static_cast<double>(ts - p.timestamp) / static_cast<double>(q.timestamp - p.timestamp);
        if (!started) {
          track.start_slot = static_cast<int>(slot);
          started = true;
        }
        track.positions.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
      }
    }
    if (!started) {
      table.warnings.push_back("vehicle " + label + " lies outside the scenario window and was dropped");
      continue;
    }
    table.tracks[id] = std::move(track);
  }
  return table;
}

inline TrajectoryTable load_trajectories(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path.string());
  return parse_trajectories(in, opts);
}

/// Writes the planar schema; timestamps are slots.
inline void write_trajectories(std::ostream& os, const TrajectoryTable& table) {
  os << kPlanarHeader << '\n';
  const auto old = os.precision(17);
  for (const auto& [id, track] : table.tracks)
    for (std::size_t i = 0; i < track.positions.size(); ++i)
      os << id << ',' << track.start_slot + static_cast<int>(i) << ',' << track.positions[i].x << ','
         << track.positions[i].y << '\n';
  os.precision(old);
}

/// Normal law truncated at zero; variance 0 gives a constant.
struct SpeedLaw {
  double mean = 5.22;
  double variance = 2.61;
};

/// Presence duration in slots, normal law clipped to [1, horizon].
/// A non-positive mean keeps every vehicle for the whole horizon.
struct DwellLaw {
  double mean = 0.0;
  double variance = 0.0;
};

struct SynthOptions {
  int n_vehicles = 4;
  double area_side_m = 1000.0;
  int horizon = 300;
  SpeedLaw speed;
  DwellLaw dwell;
  std::uint64_t seed = 1;
};

/// Random-waypoint walks in a square area.
inline TrajectoryTable synth_trajectories(const SynthOptions& o) {
  if (!(o.area_side_m > 0)) throw std::invalid_argument("area side must be positive");
  if (o.horizon < 1) throw std::invalid_argument("horizon must be at least 1");
  TrajectoryTable table;
  for (int v = 0; v < o.n_vehicles; ++v) {
    Rng rng = make_stream(o.seed, Stream::synth, {static_cast<std::uint64_t>(v)});
    std::uniform_real_distribution<double> coord(0.0, o.area_side_m);
    std::normal_distribution<double> speed_law(o.speed.mean, std::sqrt(std::max(0.0, o.speed.variance)));
    auto draw_speed = [&]() {
      if (o.speed.variance <= 0.0) return std::max(0.0, o.speed.mean);
      for (int tries = 0; tries < 100; ++tries) {
        const double s = speed_law(rng);
        if (s >= 0.0) return s;
      }
      return 0.0;
    };

    int dwell = o.horizon;
    if (o.dwell.mean > 0.0) {
      std::normal_distribution<double> dwell_law(o.dwell.mean, std::sqrt(std::max(0.0, o.dwell.variance)));
      dwell = std::clamp(static_cast<int>(std::lround(dwell_law(rng))), 1, o.horizon);
    }
    std::uniform_int_distribution<int> entry(0, o.horizon - dwell);
    Track track;
    track.start_slot = entry(rng);

    Vec2 pos{coord(rng), coord(rng)};
    Vec2 target{coord(rng), coord(rng)};
    double speed = draw_speed();
    track.positions.push_back(pos);
    for (int step = 1; step < dwell; ++step) {
      double left = 1.0;
      while (left > 0.0 && speed > 0.0) {
        const double gap = euclidean(pos, target);
        const double reach = speed * left;
        if (reach >= gap) {
          pos = target;
          left -= gap / speed;
          target = {coord(rng), coord(rng)};
          speed = draw_speed();
        } else {
          pos.x += (target.x - pos.x) * reach / gap;
          pos.y += (target.y - pos.y) * reach / gap;
          left = 0.0;
        }
      }
      track.positions.push_back(pos);
    }
    table.tracks[v] = std::move(track);
  }
  return table;
}

struct MixtureModel {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  double log_likelihood = 0.0;
  std::vector<double> log_likelihood_trace;  // one entry per E-step
  int iterations = 0;

  std::size_t components() const { return weights.size(); }
};

inline constexpr double kVarianceFloor = 1e-6;

namespace detail {

inline double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

/// EM for a 1-D Gaussian mixture. Means start at evenly spaced sample
/// quantiles, so the fit is deterministic. Fewer than 2K samples falls back
/// to a single Gaussian.
inline MixtureModel em_fit(std::span<const double> xs, int k = 2, double tol = 1e-6, int max_iter = 200) {
  MixtureModel m;
  const std::size_t n = xs.size();
  if (n == 0) {
    m.weights = {1.0};
    m.means = {0.0};
    m.variances = {kVarianceFloor};
    return m;
  }
  if (k < 1 || n < 2 * static_cast<std::size_t>(k)) k = 1;

  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  double mean_all = 0.0;
  for (double x : xs) mean_all += x;
  mean_all /= static_cast<double>(n);
  double var_all = 0.0;
  for (double x : xs) var_all += (x - mean_all) * (x - mean_all);
  var_all = std::max(kVarianceFloor, var_all / static_cast<double>(n));

  const auto kk = static_cast<std::size_t>(k);
  m.weights.assign(kk, 1.0 / static_cast<double>(k));
  m.variances.assign(kk, var_all);
  for (std::size_t j = 0; j < kk; ++j) {
    const auto idx = static_cast<std::size_t>((static_cast<double>(j) + 0.5) / static_cast<double>(k) *
                                              static_cast<double>(n));
    m.means.push_back(sorted[std::min(idx, n - 1)]);
  }

  std::vector<double> resp(n * kk);
  std::vector<double> logp(kk);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < kk; ++j)
        logp[j] = std::log(m.weights[j]) + detail::log_normal_pdf(xs[i], m.means[j], m.variances[j]);
      const double lse = detail::log_sum_exp(logp);
      ll += lse;
      for (std::size_t j = 0; j < kk; ++j) resp[i * kk + j] = std::exp(logp[j] - lse);
    }
    m.log_likelihood = ll;
    m.log_likelihood_trace.push_back(ll);
    m.iterations = it + 1;
    if (it > 0 && ll - prev < tol) break;
    prev = ll;

    // M-step
    for (std::size_t j = 0; j < kk; ++j) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * kk + j];
        sx += resp[i * kk + j] * xs[i];
      }
      if (nk <= 0.0) {
        m.weights[j] = 0.0;
        continue;
      }
      const double mu = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) sv += resp[i * kk + j] * (xs[i] - mu) * (xs[i] - mu);
      m.weights[j] = nk / static_cast<double>(n);
      m.means[j] = mu;
      m.variances[j] = std::max(kVarianceFloor, sv / nk);
    }
    // Renormalize in case a component collapsed to zero weight.
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w = std::max(w / wsum, std::numeric_limits<double>::min());
  }
  return m;
}

/// Responsibility-weighted component mean for the component(s) that
/// explain `last_increment`.
inline double predicted_increment(const MixtureModel& m, double last_increment) {
  const std::size_t k = m.components();
  std::vector<double> logp(k);
  for (std::size_t j = 0; j < k; ++j)
    logp[j] = std::log(m.weights[j]) + detail::log_normal_pdf(last_increment, m.means[j], m.variances[j]);
  const double lse = detail::log_sum_exp(logp);
  double inc = 0.0;
  for (std::size_t j = 0; j < k; ++j) inc += std::exp(logp[j] - lse) * m.means[j];
  return inc;
}

/// Average of max(0, current + i * increment) for i = 1..h.
inline double predict_avg_distance(double current, double increment, int h) {
  if (h < 1) throw std::invalid_argument("prediction horizon must be at least 1");
  double sum = 0.0;
  for (int i = 1; i <= h; ++i) sum += std::max(0.0, current + static_cast<double>(i) * increment);
  return sum / static_cast<double>(h);
}

inline double predict_avg_distance(const MixtureModel& m, double current, double last_increment, int h) {
  return predict_avg_distance(current, predicted_increment(m, last_increment), h);
}

}  // namespace vcps::mobility
