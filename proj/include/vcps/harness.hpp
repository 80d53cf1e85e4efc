#pragma once

// Experiment orchestration: one training run plus a noise-free evaluation
// episode, report and learning-curve output, and parameter sweeps.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vcps/config.hpp"
#include "vcps/environment.hpp"
#include "vcps/marl.hpp"
#include "vcps/metrics.hpp"
#include "vcps/model.hpp"

namespace vcps::harness {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kConfig = 3, kIo = 4, kAborted = 5 };

/// Window of final training iterations averaged into cr_final_mean.
inline constexpr int kFinalWindow = 50;

struct MetricsReport {
  std::string algo;
  std::uint64_t seed = 0;
  int iterations = 0;
  std::string config_hash;
  double phi_threshold = 0.0;
  metrics::EpisodeMetrics evaluation;  // one noise-free episode after training
  double cr_final_mean = 0.0;          // mean training CR over the final window
  std::vector<marl::IterationLog> curve;
};

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline json to_json(const MetricsReport& r) {
  const auto& e = r.evaluation;
  return {{"algo", r.algo},
          {"seed", r.seed},
          {"iterations", r.iterations},
          {"config_hash", r.config_hash},
          {"phi_threshold", r.phi_threshold},
          {"cr", e.cr},
          {"cr_final_mean", r.cr_final_mean},
          {"car", {{"timeliness", e.car.timeliness}, {"completeness", e.car.completeness}, {"consistency", e.car.consistency}}},
          {"car_sum", e.car.sum()},
          {"aqt", e.aqt},
          {"sr", e.sr},
          {"quality", e.quality},
          {"learning_curve", "learning_curve.csv"}};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config::IoError("cannot write " + path.string());
  os << text;
  if (!os) throw config::IoError("failed writing " + path.string());
}

/// Header: iteration,cr,mean_dr_<vehicle id>...
inline std::string learning_curve_csv(const std::vector<marl::IterationLog>& curve, const std::vector<int>& vehicle_ids) {
  std::string out = "iteration,cr";
  for (int id : vehicle_ids) out += ",mean_dr_" + std::to_string(id);
  out += '\n';
  for (const auto& l : curve) {
    out += std::to_string(l.iteration) + "," + format_double(l.cr);
    for (double d : l.mean_dr) out += "," + format_double(d);
    out += '\n';
  }
  return out;
}

struct RunOptions {
  marl::Algorithm algo = marl::Algorithm::proposed;
  std::uint64_t seed = 1;
  std::optional<int> iterations;          // defaults to training.iterations
  std::optional<std::filesystem::path> out;
  bool checkpoints = true;
};

inline double final_mean(const std::vector<marl::IterationLog>& curve, int window = kFinalWindow) {
  if (curve.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(curve.size(), static_cast<std::size_t>(window));
  double s = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].cr;
  return s / static_cast<double>(n);
}

/// Trains, evaluates and (with `out`) writes report.json, learning_curve.csv
/// and agent checkpoints.
inline MetricsReport run_experiment(const ScenarioConfig& cfg, const RunOptions& opt) {
  const sim::Environment env(validate_scenario(cfg));
  const int iterations = opt.iterations.value_or(cfg.training.iterations);
  if (opt.out) std::filesystem::create_directories(*opt.out);

  marl::TrainOptions to;
  to.iterations = iterations;
  to.seed = opt.seed;
  if (opt.out && opt.checkpoints) to.checkpoint_dir = *opt.out / "checkpoints";
  auto trained = marl::train(env, opt.algo, to);

  marl::EpisodeOptions eo{opt.seed, static_cast<std::uint64_t>(iterations), 0.0, false};
  const auto eval = marl::run_episode(env, trained.learner, eo);

  MetricsReport r;
  r.algo = marl::to_string(opt.algo);
  r.seed = opt.seed;
  r.iterations = iterations;
  r.config_hash = config::config_hash(cfg);
  r.phi_threshold = cfg.phi_threshold;
  r.evaluation = metrics::summarize(eval.slots, cfg.fusion, cfg.phi_threshold);
  r.cr_final_mean = final_mean(trained.curve);
  r.curve = std::move(trained.curve);

  if (opt.out) {
    std::vector<int> ids;
    for (const auto& v : cfg.vehicles) ids.push_back(v.id);
    write_file(*opt.out / "report.json", to_json(r).dump(2) + "\n");
    write_file(*opt.out / "learning_curve.csv", learning_curve_csv(r.curve, ids));
  }
  return r;
}

inline MetricsReport run_experiment(const std::filesystem::path& config_path, const RunOptions& opt,
                                    const std::map<std::string, std::string>& overrides = {}) {
  return run_experiment(config::load_config(config_path, overrides), opt);
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParam { bandwidth, view_size, traffic };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "bandwidth") return SweepParam::bandwidth;
  if (s == "view_size") return SweepParam::view_size;
  if (s == "traffic") return SweepParam::traffic;
  throw std::invalid_argument("unknown sweep parameter '" + s + "' (expected bandwidth, view_size or traffic)");
}

inline const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::bandwidth: return "bandwidth";
    case SweepParam::view_size: return "view_size";
    case SweepParam::traffic: return "traffic";
  }
  return "?";
}

/// Derives one sweep point from a base config document.
///   bandwidth  every edge's capacity in MHz
///   view_size  every view requires `value` consecutive catalog types
///              starting at its lowest current type (wrapping around)
///   traffic    vehicle count; entries are repeated cyclically with fresh
///              ids (synthetic trajectories regenerate per vehicle)
inline json sweep_point(const json& base, SweepParam p, double value) {
  json j = base;
  switch (p) {
    case SweepParam::bandwidth:
      if (!(value > 0)) throw config::ConfigError("sweep.bandwidth", "must be positive");
      for (auto& e : j.at("edges")) e["bandwidth"] = value * 1e6;
      break;
    case SweepParam::view_size: {
      const auto k = static_cast<long>(value);
      const auto n = static_cast<long>(j.at("catalog").size());
      if (k < 1 || k > n) throw config::ConfigError("sweep.view_size", "must lie in [1, catalog size]");
      for (auto& v : j.at("views")) {
        auto req = v.at("required").get<std::vector<long>>();
        const long first = req.empty() ? 0 : *std::min_element(req.begin(), req.end());
        std::vector<long> out;
        for (long i = 0; i < k; ++i) out.push_back((first + i) % n);
        v["required"] = out;
      }
      break;
    }
    case SweepParam::traffic: {
      const auto k = static_cast<std::size_t>(value);
      const auto& src = base.at("vehicles");
      if (k < 1 || src.empty()) throw config::ConfigError("sweep.traffic", "needs at least one vehicle");
      json out = json::array();
      for (std::size_t i = 0; i < k; ++i) {
        json v = src[i % src.size()];
        v["id"] = static_cast<int>(i);
        if (i >= src.size() && base.contains("trajectories")) v.erase("trajectory");
        out.push_back(v);
      }
      j["vehicles"] = out;
      break;
    }
  }
  return j;
}

struct SweepOptions {
  SweepParam param = SweepParam::bandwidth;
  std::vector<double> values;
  RunOptions run;
  unsigned threads = 1;
};

struct SweepPoint {
  double value = 0.0;
  MetricsReport report;
};

inline std::string sweep_csv(SweepParam p, const std::vector<SweepPoint>& points) {
  std::string out =
      "param,value,algo,seed,cr,cr_final_mean,car_timeliness,car_completeness,car_consistency,aqt,sr,quality,config_hash\n";
  for (const auto& pt : points) {
    const auto& r = pt.report;
    const auto& e = r.evaluation;
    out += std::string(to_string(p)) + "," + format_double(pt.value) + "," + r.algo + "," + std::to_string(r.seed) +
           "," + format_double(e.cr) + "," + format_double(r.cr_final_mean) + "," + format_double(e.car.timeliness) +
           "," + format_double(e.car.completeness) + "," + format_double(e.car.consistency) + "," +
           format_double(e.aqt) + "," + format_double(e.sr) + "," + format_double(e.quality) + "," + r.config_hash +
           "\n";
  }
  return out;
}

/// Runs every point (in parallel across `threads`), each in its own
/// `<out>/<param>_<index>` directory, then writes `<out>/sweep.csv` in point
/// order. Each point is single-threaded, so outputs do not depend on the
/// thread count.
inline std::vector<SweepPoint> run_sweep(const json& base, const std::filesystem::path& base_dir,
                                         const SweepOptions& opt) {
  std::vector<ScenarioConfig> cfgs;
  for (double v : opt.values) cfgs.push_back(config::parse_config(sweep_point(base, opt.param, v), base_dir));
  for (const auto& c : cfgs) validate_scenario(c);

  std::vector<SweepPoint> points(cfgs.size());
  std::vector<std::exception_ptr> errors(cfgs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i; (i = next++) < cfgs.size();) {
      try {
        RunOptions ro = opt.run;
        if (ro.out) ro.out = *opt.run.out / (std::string(to_string(opt.param)) + "_" + std::to_string(i));
        points[i] = {opt.values[i], run_experiment(cfgs[i], ro)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(cfgs.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (opt.run.out) write_file(*opt.run.out / "sweep.csv", sweep_csv(opt.param, points));
  return points;
}

}  // namespace vcps::harness
