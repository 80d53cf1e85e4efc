// Command-line front end: run, sweep, gen-traj, validate.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vcps/config.hpp"
#include "vcps/harness.hpp"
#include "vcps/mobility.hpp"

extern char** environ;

namespace {

using namespace vcps;

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError("--values", "not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--values", "needs at least one value");
  return out;
}

void print_summary(const harness::MetricsReport& r) {
  std::cout << r.algo << " seed " << r.seed << ": cr " << r.evaluation.cr << ", cr_final_mean " << r.cr_final_mean
            << ", quality " << r.evaluation.quality << ", sr " << r.evaluation.sr << ", aqt " << r.evaluation.aqt
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicular cyber-physical system simulator and learner"};
  app.require_subcommand(1);

  std::string config_path, algo = "proposed", out;
  std::uint64_t seed = 1;
  int iterations = 0;

  auto* run = app.add_subcommand("run", "train one algorithm and write a report");
  run->add_option("--config", config_path, "scenario JSON")->required();
  run->add_option("--algo", algo, "proposed | c_ddpg | mac | random");
  run->add_option("--seed", seed, "experiment seed");
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--iterations", iterations, "override training.iterations");

  std::string param, values;
  unsigned threads = 1;
  auto* sweep = app.add_subcommand("sweep", "run one algorithm across a parameter sweep");
  sweep->add_option("--config", config_path, "scenario JSON")->required();
  sweep->add_option("--algo", algo, "proposed | c_ddpg | mac | random");
  sweep->add_option("--seed", seed, "experiment seed");
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_option("--iterations", iterations, "override training.iterations");
  sweep->add_option("--param", param, "bandwidth (MHz) | view_size | traffic")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--threads", threads, "parallel sweep points");

  mobility::SynthOptions so;
  auto* gen = app.add_subcommand("gen-traj", "write synthetic trajectories as CSV");
  gen->add_option("--out", out, "CSV path")->required();
  gen->add_option("--vehicles", so.n_vehicles, "vehicle count");
  gen->add_option("--horizon", so.horizon, "slots");
  gen->add_option("--area", so.area_side_m, "square side in meters");
  gen->add_option("--speed-mean", so.speed.mean, "m/s");
  gen->add_option("--speed-variance", so.speed.variance, "(m/s)^2");
  gen->add_option("--dwell-mean", so.dwell.mean, "slots; 0 keeps every vehicle for the whole horizon");
  gen->add_option("--dwell-variance", so.dwell.variance, "slots^2");
  gen->add_option("--seed", so.seed, "generator seed");

  auto* validate = app.add_subcommand("validate", "check a scenario config");
  validate->add_option("--config", config_path, "scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? harness::kOk : harness::kUsage;
  }

  const auto overrides = config::environment_overrides(environ);
  try {
    if (*validate) {
      const auto cfg = config::load_config(config_path, overrides);
      validate_scenario(cfg);
      std::cout << "ok " << config::config_hash(cfg) << "\n";
      return harness::kOk;
    }
    if (*gen) {
      const auto table = mobility::synth_trajectories(so);
      std::ofstream os(out);
      if (!os) throw config::IoError("cannot write " + out);
      mobility::write_trajectories(os, table);
      return harness::kOk;
    }

    harness::RunOptions ro;
    try {
      ro.algo = marl::parse_algorithm(algo);
    } catch (const std::invalid_argument& e) {
      std::cerr << e.what() << "\n";
      return harness::kUsage;
    }
    ro.seed = seed;
    if (iterations > 0) ro.iterations = iterations;
    ro.out = out;

    if (*run) {
      print_summary(harness::run_experiment(config_path, ro, overrides));
      return harness::kOk;
    }
    if (*sweep) {
      harness::SweepOptions so2;
      try {
        so2.param = harness::parse_sweep_param(param);
        so2.values = parse_values(values);
      } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return harness::kUsage;
      }
      so2.run = ro;
      so2.threads = threads;
      auto doc = config::read_json_file(config_path);
      config::apply_overrides(doc, overrides);
      const auto dir = std::filesystem::path(config_path).parent_path();
      for (const auto& pt : harness::run_sweep(doc, dir, so2)) {
        std::cout << harness::to_string(so2.param) << "=" << pt.value << " ";
        print_summary(pt.report);
      }
      return harness::kOk;
    }
  } catch (const config::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return harness::kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return harness::kIo;
  } catch (const config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return harness::kConfig;
  } catch (const ScenarioError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return harness::kConfig;
  } catch (const marl::TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return harness::kAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return harness::kConfig;
  }
  return harness::kOk;
}
