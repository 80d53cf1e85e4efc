#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "vcps/harness.hpp"

using namespace vcps;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = VCPS_CONFIG_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

fusion::ViewScore scored(double t, double c, double k, double phi = 1.0) {
  fusion::ViewScore s;
  s.normalized = {t, c, k};
  s.completeness = phi;
  return s;
}

}  // namespace

TEST(Metrics, CumulativeReward) {
  std::vector<double> r{0.5, 0.25, 0.125};
  EXPECT_DOUBLE_EQ(metrics::metric_cr(r), 0.875);
  EXPECT_EQ(metrics::metric_cr({}), 0.0);
}

TEST(Metrics, CarWeightedComplements) {
  std::vector<fusion::ViewScore> s{scored(0.2, 0.5, 0.1)};
  const auto c = metrics::metric_car(s, AovWeights{});
  EXPECT_NEAR(c.timeliness, 0.24, 1e-15);
  EXPECT_NEAR(c.completeness, 0.20, 1e-15);
  EXPECT_NEAR(c.consistency, 0.27, 1e-15);
  EXPECT_NEAR(c.sum(), 1.0 - fusion::age_of_view(s[0].normalized, AovWeights{}), 1e-15);
}

TEST(Metrics, AqtNestedMean) {
  // slot 0: vehicle means 1 and 3 -> 2; slot 1: only one uploader -> 2;
  // slot 2: nobody uploads and is skipped.
  std::vector<std::vector<std::vector<double>>> q{{{1.0}, {2.0, 4.0}, {}}, {{}, {2.0}}, {{}, {}}};
  EXPECT_DOUBLE_EQ(metrics::metric_aqt(q), 2.0);
  EXPECT_EQ(metrics::metric_aqt({}), 0.0);
}

TEST(Metrics, SuccessRatio) {
  std::vector<fusion::ViewScore> s{scored(0, 0, 0, 1.0), scored(0, 0, 0, 0.5), scored(0, 0, 0, 0.8)};
  EXPECT_NEAR(metrics::metric_sr(s, 0.8), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(metrics::metric_sr({}, 0.8), 0.0);
}

TEST(Metrics, FinalWindowMean) {
  std::vector<marl::IterationLog> curve;
  for (int i = 0; i < 60; ++i) curve.push_back({i, static_cast<double>(i), {}, 0.0});
  EXPECT_DOUBLE_EQ(harness::final_mean(curve), (10 + 59) / 2.0);
  curve.resize(4);
  EXPECT_DOUBLE_EQ(harness::final_mean(curve), 1.5);
}

TEST(Config, ParsesExample) {
  const auto cfg = config::load_config(kConfigs / "example.json");
  EXPECT_EQ(cfg.horizon, 20);
  EXPECT_EQ(cfg.vehicles.size(), 3u);
  EXPECT_EQ(cfg.training.batch_size, 64u);
  EXPECT_EQ(cfg.training.actor_hidden, std::vector<int>{32});
  for (const auto& v : cfg.vehicles) EXPECT_EQ(v.trajectory.positions.size(), 20u);
  EXPECT_NO_THROW(validate_scenario(cfg));
}

TEST(Config, CsvTrajectoriesByVehicleId) {
  const auto cfg = config::load_config(kConfigs / "example_csv.json");
  const auto& t = cfg.vehicles[0].trajectory;
  EXPECT_EQ(t.start_slot, 0);
  ASSERT_EQ(t.positions.size(), 6u);
  EXPECT_DOUBLE_EQ(t.positions[1].x, -140.0);
  EXPECT_EQ(cfg.vehicles[1].trajectory.start_slot, 1);
}

TEST(Config, UnknownKeyRejectedWithPath) {
  auto j = config::read_json_file(kConfigs / "example.json");
  j["edges"][0]["bandwith"] = 1;
  try {
    config::parse_config(j, kConfigs);
    FAIL();
  } catch (const config::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("edges[0]"), std::string::npos) << e.what();
  }
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(config::load_config(kConfigs / "nope.json"), config::IoError);
}

TEST(Config, OverridesNestAndIndex) {
  auto j = config::read_json_file(kConfigs / "example.json");
  config::apply_overrides(j, {{"VCPS_TRAINING__ITERATIONS", "7"},
                              {"VCPS_EDGES__0__BANDWIDTH", "1e6"},
                              {"VCPS_AOV__WEIGHTS", "[0.5,0.25,0.25]"},
                              {"OTHER", "1"}});
  const auto cfg = config::parse_config(j, kConfigs);
  EXPECT_EQ(cfg.training.iterations, 7);
  EXPECT_EQ(cfg.edges[0].bandwidth_hz, 1e6);
  EXPECT_EQ(cfg.fusion.weights.timeliness, 0.5);
  EXPECT_THROW(config::apply_overrides(j, {{"VCPS_EDGES__X", "1"}}), config::ConfigError);
  EXPECT_THROW(config::apply_overrides(j, {{"VCPS_EDGES__5__BANDWIDTH", "1"}}), config::ConfigError);
}

TEST(Config, EnvironmentOverridesFiltered) {
  std::string a = "VCPS_SEED=4", b = "PATH=/bin";
  char* env[] = {a.data(), b.data(), nullptr};
  const auto m = config::environment_overrides(env);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.at("VCPS_SEED"), "4");
}

TEST(Config, HashTracksContent) {
  const auto a = config::load_config(kConfigs / "example.json");
  auto b = a;
  EXPECT_EQ(config::config_hash(a), config::config_hash(b));
  EXPECT_EQ(config::config_hash(a).size(), 16u);
  b.edges[0].bandwidth_hz *= 2;
  EXPECT_NE(config::config_hash(a), config::config_hash(b));
  // canonical form round-trips
  EXPECT_EQ(config::parse_config(config::to_json(a)), a);
}

TEST(Harness, ReportsAreByteIdenticalAcrossRuns) {
  const auto cfg = config::load_config(kConfigs / "example.json");
  const auto d1 = fresh_dir("vcps_run_a"), d2 = fresh_dir("vcps_run_b");
  harness::RunOptions o;
  o.algo = marl::Algorithm::proposed;
  o.seed = 2;
  o.iterations = 6;
  o.out = d1;
  harness::run_experiment(cfg, o);
  o.out = d2;
  const auto r = harness::run_experiment(cfg, o);
  EXPECT_EQ(slurp(d1 / "report.json"), slurp(d2 / "report.json"));
  EXPECT_EQ(slurp(d1 / "learning_curve.csv"), slurp(d2 / "learning_curve.csv"));
  EXPECT_TRUE(fs::exists(d1 / "checkpoints" / "agent0_actor.txt"));

  const auto report = nlohmann::json::parse(slurp(d1 / "report.json"));
  for (const char* k : {"algo", "seed", "config_hash", "cr", "cr_final_mean", "car", "car_sum", "aqt", "sr", "quality"})
    EXPECT_TRUE(report.contains(k)) << k;
  EXPECT_EQ(report["config_hash"], config::config_hash(cfg));
  const auto csv = slurp(d1 / "learning_curve.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,cr,mean_dr_0,mean_dr_1,mean_dr_2");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_NEAR(r.evaluation.car.sum(), r.evaluation.cr / cfg.horizon, 1e-12);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Harness, SweepPoints) {
  const auto base = config::read_json_file(kConfigs / "example.json");
  const auto bw = harness::sweep_point(base, harness::SweepParam::bandwidth, 5);
  EXPECT_EQ(bw["edges"][0]["bandwidth"], 5e6);
  const auto vs = harness::sweep_point(base, harness::SweepParam::view_size, 3);
  EXPECT_EQ(vs["views"][0]["required"], nlohmann::json({0, 1, 2}));
  EXPECT_EQ(vs["views"][1]["required"], nlohmann::json({1, 2, 3}));
  const auto tr = harness::sweep_point(base, harness::SweepParam::traffic, 5);
  EXPECT_EQ(tr["vehicles"].size(), 5u);
  EXPECT_EQ(tr["vehicles"][4]["id"], 4);
  EXPECT_NO_THROW(validate_scenario(config::parse_config(tr, kConfigs)));
  EXPECT_THROW(harness::sweep_point(base, harness::SweepParam::view_size, 9), config::ConfigError);
  EXPECT_THROW(harness::parse_sweep_param("speed"), std::invalid_argument);
}

TEST(Harness, SweepIndependentOfThreadCount) {
  const auto base = config::read_json_file(kConfigs / "example.json");
  auto run = [&](unsigned threads, const fs::path& out) {
    harness::SweepOptions o;
    o.param = harness::SweepParam::bandwidth;
    o.values = {1, 2, 4};
    o.run.algo = marl::Algorithm::mac;
    o.run.seed = 3;
    o.run.iterations = 3;
    o.run.out = out;
    o.threads = threads;
    harness::run_sweep(base, kConfigs, o);
    return slurp(out / "sweep.csv");
  };
  const auto a = fresh_dir("vcps_sweep_1"), b = fresh_dir("vcps_sweep_3");
  const auto one = run(1, a);
  EXPECT_EQ(one, run(3, b));
  for (int i = 0; i < 3; ++i) {
    const auto sub = "bandwidth_" + std::to_string(i);
    EXPECT_EQ(slurp(a / sub / "report.json"), slurp(b / sub / "report.json"));
  }
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 4);
  fs::remove_all(a);
  fs::remove_all(b);
}
