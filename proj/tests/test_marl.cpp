#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "helpers.hpp"
#include "vcps/marl.hpp"

using namespace vcps;
using namespace vcps::marl;

namespace {

sim::Environment tiny_env(int horizon = 10) { return sim::Environment(validate_scenario(vcps::testing::tiny_config(horizon))); }

std::vector<Agent> two_agents(std::uint64_t seed) {
  TrainingParams tp;
  tp.actor_hidden = {5};
  tp.critic_hidden = {6};
  Rng rng(seed);
  std::vector<Agent> a;
  a.push_back(make_agent(3, 0, 2, 4, tp, rng));
  a.push_back(make_agent(3, 2, 2, 4, tp, rng));
  return a;
}

Batch random_batch(std::uint64_t seed, Eigen::Index m = 5) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto fill = [&](Eigen::Index r, Eigen::Index c) {
    Matrix x(r, c);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = u(rng);
    return x;
  };
  Batch b;
  b.obs = {fill(3, m), fill(3, m)};
  b.next_obs = {fill(3, m), fill(3, m)};
  b.actions = fill(4, m);
  b.rewards = fill(2, m);
  b.not_done = Eigen::RowVectorXd::Ones(m);
  b.not_done(m - 1) = 0.0;
  return b;
}

}  // namespace

TEST(Encoding, SizesAndLayout) {
  const auto env = tiny_env();
  const auto& sc = env.scenario();
  EXPECT_EQ(observation_size(sc), 3u * 3 + 2u * 3);
  const auto st = env.initial_state();
  const auto o = encode_state(env, st, 0, 0);
  ASSERT_EQ(o.size(), observation_size(sc));
  // vehicle 0 senses types 0 and 1
  EXPECT_EQ(o[0], 1.0);
  EXPECT_EQ(o[1], 1.0);
  EXPECT_EQ(o[2], 0.0);
  // empty cache
  for (int k = 6; k < 9; ++k) EXPECT_EQ(o[static_cast<std::size_t>(k)], 0.0);
  // view 0 requires {0,1}, view 1 requires {1,2}
  EXPECT_EQ(o[9], 1.0);
  EXPECT_EQ(o[10], 1.0);
  EXPECT_EQ(o[11], 0.0);
  EXPECT_EQ(o[12], 0.0);
  EXPECT_EQ(o[13], 1.0);
  EXPECT_EQ(o[14], 1.0);
  EXPECT_EQ(encode_central_state(env, st, 0).size(), central_state_size(sc));
}

TEST(Encoding, UncoveredVehicleSeesZeros) {
  auto cfg = vcps::testing::tiny_config();
  cfg.vehicles[1].trajectory = vcps::testing::stationary({5000, 5000}, cfg.horizon);
  const sim::Environment env(validate_scenario(cfg));
  const auto o = encode_state(env, env.initial_state(), 1, 3);
  for (double x : o) EXPECT_EQ(x, 0.0);
}

TEST(Encoding, CacheFreshnessAfterDelivery) {
  const auto env = tiny_env(10);
  auto st = env.initial_state();
  st.receipts[0].emplace_back(2, 1.0);
  EXPECT_DOUBLE_EQ(env.cache_freshness(st, 0, 2, 3), 0.8);
  EXPECT_EQ(env.cache_freshness(st, 0, 2, 0), 0.0);  // not yet arrived
  EXPECT_EQ(env.cache_freshness(st, 0, 1, 3), 0.0);
}

TEST(Actions, NoiselessIsActorOutputAndClamped) {
  auto agents = two_agents(1);
  const std::vector<double> obs{0.1, 0.2, 0.3};
  Rng rng(3);
  const auto a = select_action(agents[0].actor, obs, 0.0, rng);
  const auto mu = nn::forward<double>(agents[0].actor, std::span<const double>(obs));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], mu(static_cast<Eigen::Index>(i)));
  for (int k = 0; k < 200; ++k)
    for (double x : select_action(agents[0].actor, obs, 5.0, rng)) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  EXPECT_THROW(select_action(agents[0].actor, obs, -0.1, rng), std::invalid_argument);
}

TEST(Rewards, SystemRewardIsMeanComplement) {
  std::vector<std::vector<fusion::ViewScore>> s(2);
  s[0].resize(2);
  s[1].resize(1);
  s[0][0].aov = 0.2;
  s[0][1].aov = 0.4;
  s[1][0].aov = 1.0;
  EXPECT_NEAR(sim::Environment::reward_of(s), (0.8 + 0.6 + 0.0) / 3.0, 1e-15);
  EXPECT_EQ(sim::Environment::reward_of({}), 0.0);
}

TEST(Rewards, DifferenceRewardMatchesRescoring) {
  const auto env = tiny_env(10);
  const auto& sc = env.scenario();
  const auto ch = sim::draw_channel(sc, 4, 0);
  auto st = env.initial_state();
  sim::SlotDecision d;
  d.raw = {std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
  d.edge_actions = {env.rank_allocation(0, 0)};
  const auto out = env.step(ch, st, 0, d);
  for (std::size_t v = 0; v < 2; ++v) {
    const int id = sc.vehicles()[v].id;
    std::vector<fusion::ReceivedInfo> rest;
    for (const auto& u : out.uploads[0])
      if (!(u.vehicle == id && u.success)) rest.push_back(u);
    std::vector<std::vector<fusion::ViewScore>> scores(1);
    for (const auto& view : sc.edge_views(0)) scores[0].push_back(fusion::score_view(view, rest, sc.config().fusion, 10));
    EXPECT_EQ(out.difference_rewards[v], out.reward - sim::Environment::reward_of(scores));
  }
}

TEST(Rewards, NoDeliveryMeansZeroDifference) {
  auto cfg = vcps::testing::tiny_config();
  cfg.vehicles[1].trajectory = vcps::testing::stationary({5000, 5000}, cfg.horizon);
  const sim::Environment env(validate_scenario(cfg));
  const auto ch = sim::draw_channel(env.scenario(), 1, 0);
  auto st = env.initial_state();
  sim::SlotDecision d;
  d.raw = {std::vector<double>(4, 0.5), std::vector<double>(4, 0.5)};
  d.edge_actions = {env.rank_allocation(0, 0)};
  const auto out = env.step(ch, st, 0, d);
  EXPECT_EQ(out.difference_rewards[1], 0.0);
}

TEST(Critic, SingleSampleNoDiscountIsSquaredError) {
  auto agents = two_agents(2);
  auto b = random_batch(3, 1);
  const Matrix q = nn::forward<double>(agents[0].critic, marl::detail::stack(b.obs[0], b.actions));
  const auto lg = critic_loss(agents, 0, b, 0.0);
  const double r = b.rewards(0, 0);
  EXPECT_NEAR(lg.loss, (q(0, 0) - r) * (q(0, 0) - r), 1e-14);
}

TEST(Critic, TerminalDropsBootstrap) {
  auto agents = two_agents(2);
  auto b = random_batch(3, 1);
  b.not_done(0) = 0.0;
  EXPECT_EQ(critic_loss(agents, 1, b, 0.99).loss, critic_loss(agents, 1, b, 0.0).loss);
}

TEST(Critic, GradientMatchesFiniteDifferences) {
  auto agents = two_agents(4);
  const auto b = random_batch(5);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto lg = critic_loss(agents, s, b, 0.9);
    const double h = 1e-6;
    auto params = agents[s].critic.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = critic_loss(agents, s, b, 0.9).loss;
      params[i] = keep - h;
      const double down = critic_loss(agents, s, b, 0.9).loss;
      params[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(lg.grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Actor, GradientMatchesFiniteDifferences) {
  auto agents = two_agents(6);
  const auto b = random_batch(7);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto lg = actor_loss(agents, s, b);
    const double h = 1e-6;
    auto params = agents[s].actor.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = actor_loss(agents, s, b).loss;
      params[i] = keep - h;
      const double down = actor_loss(agents, s, b).loss;
      params[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(lg.grad[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Actor, UpdateRaisesCriticValue) {
  auto agents = two_agents(8);
  const auto b = random_batch(9, 32);
  const double before = -actor_loss(agents, 0, b).loss;
  for (int k = 0; k < 20; ++k) actor_update(agents, 0, b);
  EXPECT_GT(-actor_loss(agents, 0, b).loss, before);
}

TEST(Replay, CapacityEvictsOldest) {
  ReplayBuffer buf(3, 1, 1, 1);
  for (int i = 0; i < 5; ++i) {
    Transition tr{{{double(i)}}, {{double(i)}}, {double(i)}, {double(i)}, false};
    buf.push(tr);
  }
  EXPECT_EQ(buf.size(), 3u);
  std::multiset<double> kept;
  for (std::size_t i = 0; i < 3; ++i) kept.insert(buf.reward(i, 0));
  EXPECT_EQ(kept, (std::multiset<double>{2, 3, 4}));
  Transition bad{{{1.0, 2.0}}, {{1.0}}, {1.0}, {1.0}, false};
  EXPECT_THROW(buf.push(bad), std::invalid_argument);
}

TEST(Replay, SamplingIsDistinctAndUniform) {
  const std::size_t n = 20, m = 5, draws = 20000;
  ReplayBuffer buf(n, 1, 1, 1);
  for (std::size_t i = 0; i < n; ++i) buf.push({{{0.0}}, {{0.0}}, {0.0}, {0.0}, false});
  Rng rng(11);
  std::vector<double> counts(n, 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    const auto idx = buf.sample_indices(m, rng);
    std::set<std::size_t> distinct(idx.begin(), idx.end());
    ASSERT_EQ(distinct.size(), m);
    for (auto i : idx) counts[i] += 1;
  }
  const double expected = static_cast<double>(draws * m) / n;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 43.8);  // chi-square, 19 dof, p = 0.001
  EXPECT_THROW(buf.sample_indices(n + 1, rng), std::invalid_argument);
}

TEST(Replay, GatherLaysOutColumns) {
  ReplayBuffer buf(4, 2, 2, 3);
  buf.push({{{1, 2}, {3, 4}}, {{5, 6}, {7, 8}}, {0.1, 0.2, 0.3}, {9, 10}, true});
  buf.push({{{0, 0}, {0, 0}}, {{0, 0}, {0, 0}}, {0, 0, 0}, {0, 0}, false});
  const std::vector<std::size_t> idx{0};
  const auto b = gather(buf, idx);
  EXPECT_EQ(b.obs[1](1, 0), 4.0);
  EXPECT_EQ(b.next_obs[0](0, 0), 5.0);
  EXPECT_FLOAT_EQ(static_cast<float>(b.actions(2, 0)), 0.3f);
  EXPECT_EQ(b.rewards(1, 0), 10.0);
  EXPECT_EQ(b.not_done(0), 0.0);
}

TEST(Learner, JointLayout) {
  const auto env = tiny_env();
  const auto p = make_learner(env, Algorithm::proposed, 1);
  EXPECT_EQ(p.agents.size(), 2u);
  EXPECT_EQ(p.joint_size, 8u);
  EXPECT_EQ(p.agents[1].action_offset, 4u);
  const auto c = make_learner(env, Algorithm::c_ddpg, 1);
  EXPECT_EQ(c.agents.size(), 1u);
  EXPECT_EQ(c.joint_size, 10u);
  EXPECT_EQ(make_learner(env, Algorithm::random, 1).agents.size(), 0u);
  EXPECT_EQ(parse_algorithm("c_ddpg"), Algorithm::c_ddpg);
  EXPECT_THROW(parse_algorithm("dqn"), std::invalid_argument);
}

TEST(Episode, ProposedStoresDifferenceRewards) {
  const auto env = tiny_env(6);
  const auto l = make_learner(env, Algorithm::proposed, 2);
  const auto ep = run_episode(env, l, {2, 0, 0.1, true});
  ASSERT_EQ(ep.transitions.size(), 6u);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(ep.transitions[t].rewards, ep.slots[t].difference_rewards);
    EXPECT_EQ(ep.transitions[t].terminal, t == 5);
  }
  const auto m = make_learner(env, Algorithm::mac, 2);
  const auto em = run_episode(env, m, {2, 0, 0.1, true});
  for (std::size_t t = 0; t < 6; ++t)
    for (double r : em.transitions[t].rewards) EXPECT_EQ(r, em.slots[t].reward);
}

TEST(Training, NoiseSchedule) {
  TrainingParams tp;
  EXPECT_DOUBLE_EQ(exploration_std(tp, 0), 0.2);
  EXPECT_NEAR(exploration_std(tp, 1000), 0.2 * std::pow(0.999, 1000), 1e-15);
  EXPECT_DOUBLE_EQ(exploration_std(tp, 100000), tp.noise_floor);
}

TEST(Training, Deterministic) {
  const auto env = tiny_env(8);
  for (auto algo : {Algorithm::random, Algorithm::proposed, Algorithm::c_ddpg}) {
    const auto a = train(env, algo, {12, 5, true, std::nullopt, nullptr});
    const auto b = train(env, algo, {12, 5, true, std::nullopt, nullptr});
    ASSERT_EQ(a.curve.size(), 12u);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      EXPECT_EQ(a.curve[i].cr, b.curve[i].cr);
      EXPECT_EQ(a.curve[i].mean_dr, b.curve[i].mean_dr);
    }
    for (std::size_t k = 0; k < a.learner.agents.size(); ++k) EXPECT_EQ(a.learner.agents[k].actor, b.learner.agents[k].actor);
  }
}

TEST(Training, LearningDoesNotPerturbTheSimulatorStreams) {
  const auto env = tiny_env(8);
  // batch 16 needs two episodes of 8 slots, so the first two rollouts happen
  // before any update and must match with learning on or off.
  const auto on = train(env, Algorithm::mac, {4, 9, true, std::nullopt, nullptr});
  const auto off = train(env, Algorithm::mac, {4, 9, false, std::nullopt, nullptr});
  EXPECT_EQ(on.curve[0].cr, off.curve[0].cr);
  EXPECT_EQ(on.curve[1].cr, off.curve[1].cr);
  EXPECT_NE(on.learner.agents[0].actor, off.learner.agents[0].actor);
  const auto r1 = train(env, Algorithm::random, {3, 9, true, std::nullopt, nullptr});
  const auto r2 = train(env, Algorithm::random, {3, 9, false, std::nullopt, nullptr});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r1.curve[i].cr, r2.curve[i].cr);
}

TEST(Training, CheckpointsWritten) {
  const auto env = tiny_env(4);
  const auto dir = std::filesystem::temp_directory_path() / "vcps_test_ckpt";
  std::filesystem::remove_all(dir);
  const auto r = train(env, Algorithm::proposed, {2, 1, true, dir, nullptr});
  std::ifstream in(dir / "agent1_critic_target.txt");
  ASSERT_TRUE(in.good());
  EXPECT_EQ(nn::load_checkpoint<double>(in), r.learner.agents[1].critic_target);
  std::filesystem::remove_all(dir);
}
