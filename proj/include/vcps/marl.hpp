#pragma once

// Multi-agent actor-critic learning over the slot simulation: observation
// encoding, exploration, replay, critic/actor gradient steps, episode
// rollout and the training loop for the four algorithms.
//
//   proposed  per-vehicle actors and critics, difference rewards,
//             rank-based bandwidth at the edge
//   mac       as proposed but every agent is trained on the system reward
//   c_ddpg    one central actor emits every vehicle's raw action plus a
//             per-vehicle bandwidth score; trained on the system reward
//   random    uniform raw actions and uniform simplex bandwidth; no learning

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "vcps/environment.hpp"
#include "vcps/model.hpp"
#include "vcps/nn.hpp"
#include "vcps/policy.hpp"
#include "vcps/rng.hpp"

namespace vcps::marl {

using Matrix = nn::Mlp::Matrix;

enum class Algorithm { proposed, c_ddpg, mac, random };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::proposed: return "proposed";
    case Algorithm::c_ddpg: return "c_ddpg";
    case Algorithm::mac: return "mac";
    case Algorithm::random: return "random";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::proposed, Algorithm::c_ddpg, Algorithm::mac, Algorithm::random})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown algorithm '" + s + "' (expected proposed, c_ddpg, mac or random)");
}

// ---------------------------------------------------------------------------
// Observation encoding

/// Per catalog type: sensed indicator, last normalized frequency, edge cache
/// freshness; then the required-type indicators of up to V_max views.
inline std::size_t observation_size(const Scenario& sc) {
  const std::size_t d = sc.catalog_size();
  return 3 * d + static_cast<std::size_t>(sc.config().max_views) * d;
}

namespace detail {

inline void encode_vehicle(const sim::Environment& env, const sim::EpisodeState& st, std::size_t v, int t,
                           std::span<double> out) {
  const auto& sc = env.scenario();
  const std::size_t d = sc.catalog_size();
  if (env.serving_edge(v, t) < 0) return;
  const auto& veh = sc.vehicles()[v];
  for (std::size_t i = 0; i < veh.sensible_types.size(); ++i) {
    const auto type = static_cast<std::size_t>(veh.sensible_types[i]);
    out[type] = 1.0;
    out[d + type] = std::clamp(st.frequency_level[v][i], 0.0, 1.0);
  }
}

inline void encode_edge(const sim::Environment& env, const sim::EpisodeState& st, std::size_t e, int t,
                        std::span<double> out) {
  const auto& sc = env.scenario();
  const std::size_t d = sc.catalog_size();
  for (std::size_t type = 0; type < d; ++type) out[type] = env.cache_freshness(st, e, static_cast<int>(type), t);
  const auto& views = sc.edge_views(e);
  for (std::size_t k = 0; k < views.size(); ++k)
    for (int type : views[k].required) out[d + k * d + static_cast<std::size_t>(type)] = 1.0;
}

}  // namespace detail

/// Observation of vehicle v at slot t. All zeros when v is not served.
inline std::vector<double> encode_state(const sim::Environment& env, const sim::EpisodeState& st, std::size_t v,
                                        int t) {
  const auto& sc = env.scenario();
  std::vector<double> out(observation_size(sc), 0.0);
  const int e = env.serving_edge(v, t);
  if (e < 0) return out;
  const std::size_t d = sc.catalog_size();
  detail::encode_vehicle(env, st, v, t, std::span<double>(out).first(2 * d));
  detail::encode_edge(env, st, static_cast<std::size_t>(e), t, std::span<double>(out).subspan(2 * d));
  return out;
}

/// Every vehicle's (indicator, frequency) block followed by every edge's
/// (cache, views) block.
inline std::size_t central_state_size(const Scenario& sc) {
  const std::size_t d = sc.catalog_size();
  return sc.vehicles().size() * 2 * d + sc.edges().size() * (d + static_cast<std::size_t>(sc.config().max_views) * d);
}

inline std::vector<double> encode_central_state(const sim::Environment& env, const sim::EpisodeState& st, int t) {
  const auto& sc = env.scenario();
  const std::size_t d = sc.catalog_size();
  const std::size_t edge_block = d + static_cast<std::size_t>(sc.config().max_views) * d;
  std::vector<double> out(central_state_size(sc), 0.0);
  std::span<double> all(out);
  for (std::size_t v = 0; v < env.vehicle_count(); ++v)
    detail::encode_vehicle(env, st, v, t, all.subspan(v * 2 * d, 2 * d));
  const std::size_t base = env.vehicle_count() * 2 * d;
  for (std::size_t e = 0; e < env.edge_count(); ++e)
    detail::encode_edge(env, st, e, t, all.subspan(base + e * edge_block, edge_block));
  return out;
}

/// mu(obs) plus elementwise N(0, noise_std), clamped to [0, 1].
inline std::vector<double> select_action(const nn::Mlp& actor, std::span<const double> obs, double noise_std,
                                         Rng& rng) {
  if (noise_std < 0.0) throw std::invalid_argument("noise std must be non-negative");
  const auto mu = nn::forward<double>(actor, obs);
  std::vector<double> a(mu.data(), mu.data() + mu.size());
  if (noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, noise_std);
    for (auto& x : a) x += n(rng);
  }
  for (auto& x : a) x = std::clamp(x, 0.0, 1.0);
  return a;
}

// ---------------------------------------------------------------------------
// Replay

struct Transition {
  std::vector<std::vector<double>> obs;       // per agent
  std::vector<std::vector<double>> next_obs;  // per agent
  std::vector<double> joint_action;
  std::vector<double> rewards;  // per agent
  bool terminal = false;
};

/// Fixed-capacity ring of transitions stored as flat float rows.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t agents, std::size_t obs_dim, std::size_t joint_size)
      : capacity_(capacity), agents_(agents), obs_dim_(obs_dim), joint_(joint_size) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t agents() const { return agents_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t joint_size() const { return joint_; }

  void push(const Transition& tr) {
    if (tr.obs.size() != agents_ || tr.next_obs.size() != agents_ || tr.rewards.size() != agents_)
      throw std::invalid_argument("transition agent count does not match buffer");
    if (tr.joint_action.size() != joint_) throw std::invalid_argument("transition action size does not match buffer");
    if (obs_.empty()) {
      const std::size_t rows = std::min<std::size_t>(capacity_, 4096);
      reserve_rows(rows);
    }
    if (next_ == rows_ && rows_ < capacity_) reserve_rows(std::min(capacity_, rows_ * 2));
    float* o = obs_.data() + next_ * agents_ * obs_dim_;
    float* n = next_obs_.data() + next_ * agents_ * obs_dim_;
    for (std::size_t a = 0; a < agents_; ++a) {
      if (tr.obs[a].size() != obs_dim_ || tr.next_obs[a].size() != obs_dim_)
        throw std::invalid_argument("observation size does not match buffer");
      std::transform(tr.obs[a].begin(), tr.obs[a].end(), o + a * obs_dim_, [](double x) { return float(x); });
      std::transform(tr.next_obs[a].begin(), tr.next_obs[a].end(), n + a * obs_dim_, [](double x) { return float(x); });
    }
    std::transform(tr.joint_action.begin(), tr.joint_action.end(), actions_.data() + next_ * joint_,
                   [](double x) { return float(x); });
    std::copy(tr.rewards.begin(), tr.rewards.end(), rewards_.begin() + static_cast<std::ptrdiff_t>(next_ * agents_));
    terminal_[next_] = tr.terminal ? 1 : 0;
    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  /// m distinct indices, uniform over the stored transitions (Floyd).
  std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const {
    if (m > size_) throw std::invalid_argument("cannot sample more transitions than stored");
    std::vector<std::size_t> out;
    out.reserve(m);
    std::unordered_set<std::size_t> taken;
    for (std::size_t j = size_ - m; j < size_; ++j) {
      std::uniform_int_distribution<std::size_t> u(0, j);
      const std::size_t k = u(rng);
      const std::size_t pick = taken.count(k) ? j : k;
      taken.insert(pick);
      out.push_back(pick);
    }
    return out;
  }

  std::span<const float> obs(std::size_t i, std::size_t agent) const {
    return {obs_.data() + (i * agents_ + agent) * obs_dim_, obs_dim_};
  }
  std::span<const float> next_obs(std::size_t i, std::size_t agent) const {
    return {next_obs_.data() + (i * agents_ + agent) * obs_dim_, obs_dim_};
  }
  std::span<const float> action(std::size_t i) const { return {actions_.data() + i * joint_, joint_}; }
  double reward(std::size_t i, std::size_t agent) const { return rewards_[i * agents_ + agent]; }
  bool terminal(std::size_t i) const { return terminal_[i] != 0; }

 private:
  void reserve_rows(std::size_t rows) {
    rows_ = rows;
    obs_.resize(rows * agents_ * obs_dim_);
    next_obs_.resize(rows * agents_ * obs_dim_);
    actions_.resize(rows * joint_);
    rewards_.resize(rows * agents_);
    terminal_.resize(rows);
  }

  std::size_t capacity_, agents_, obs_dim_, joint_;
  std::size_t rows_ = 0, next_ = 0, size_ = 0;
  std::vector<float> obs_, next_obs_, actions_;
  std::vector<double> rewards_;
  std::vector<unsigned char> terminal_;
};

/// A minibatch laid out one column per sample.
struct Batch {
  std::vector<Matrix> obs;       // per agent, obs_dim x M
  std::vector<Matrix> next_obs;  // per agent
  Matrix actions;                // joint x M
  Matrix rewards;                // agents x M
  Eigen::RowVectorXd not_done;   // 1 - terminal

  std::size_t size() const { return static_cast<std::size_t>(actions.cols()); }
};

inline Batch gather(const ReplayBuffer& buf, std::span<const std::size_t> idx) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  const auto od = static_cast<Eigen::Index>(buf.obs_dim());
  Batch b;
  b.obs.assign(buf.agents(), Matrix(od, m));
  b.next_obs.assign(buf.agents(), Matrix(od, m));
  b.actions.resize(static_cast<Eigen::Index>(buf.joint_size()), m);
  b.rewards.resize(static_cast<Eigen::Index>(buf.agents()), m);
  b.not_done.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const std::size_t i = idx[static_cast<std::size_t>(c)];
    for (std::size_t a = 0; a < buf.agents(); ++a) {
      const auto o = buf.obs(i, a);
      const auto n = buf.next_obs(i, a);
      for (Eigen::Index r = 0; r < od; ++r) {
        b.obs[a](r, c) = o[static_cast<std::size_t>(r)];
        b.next_obs[a](r, c) = n[static_cast<std::size_t>(r)];
      }
      b.rewards(static_cast<Eigen::Index>(a), c) = buf.reward(i, a);
    }
    const auto act = buf.action(i);
    for (Eigen::Index r = 0; r < b.actions.rows(); ++r) b.actions(r, c) = act[static_cast<std::size_t>(r)];
    b.not_done(c) = buf.terminal(i) ? 0.0 : 1.0;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Agents and gradient steps

struct Agent {
  nn::Mlp actor, critic, actor_target, critic_target;
  nn::AdamState<double> actor_opt, critic_opt;
  std::size_t action_offset = 0;  // slice of the joint action this agent emits
  std::size_t action_size = 0;
};

/// Actor obs -> hidden -> action (sigmoid); critic (obs, joint action) ->
/// hidden -> Q. Targets start as copies.
inline Agent make_agent(std::size_t obs_dim, std::size_t action_offset, std::size_t action_size,
                        std::size_t joint_size, const TrainingParams& tp, Rng& rng) {
  Agent a;
  std::vector<int> as{static_cast<int>(obs_dim)};
  as.insert(as.end(), tp.actor_hidden.begin(), tp.actor_hidden.end());
  as.push_back(static_cast<int>(action_size));
  std::vector<int> cs{static_cast<int>(obs_dim + joint_size)};
  cs.insert(cs.end(), tp.critic_hidden.begin(), tp.critic_hidden.end());
  cs.push_back(1);
  a.actor = nn::Mlp(as, nn::OutputActivation::sigmoid);
  a.critic = nn::Mlp(cs, nn::OutputActivation::identity);
  a.actor.initialize(rng);
  a.critic.initialize(rng);
  a.actor_target = a.actor;
  a.critic_target = a.critic;
  a.actor_opt = nn::AdamState<double>(a.actor.parameters().size(), tp.learning_rate);
  a.critic_opt = nn::AdamState<double>(a.critic.parameters().size(), tp.learning_rate);
  a.action_offset = action_offset;
  a.action_size = action_size;
  return a;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

namespace detail {
inline Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix x(top.rows() + bottom.rows(), top.cols());
  x.topRows(top.rows()) = top;
  x.bottomRows(bottom.rows()) = bottom;
  return x;
}
}  // namespace detail

/// Target joint action: every agent's target actor on its next observation.
inline Matrix target_actions(std::span<const Agent> agents, const Batch& b) {
  Matrix a(b.actions.rows(), b.actions.cols());
  for (std::size_t j = 0; j < agents.size(); ++j)
    a.middleRows(static_cast<Eigen::Index>(agents[j].action_offset), static_cast<Eigen::Index>(agents[j].action_size)) =
        nn::forward<double>(agents[j].actor_target, b.next_obs[j]);
  return a;
}

/// Mean squared TD error of agent s's critic:
///   eta = r_s + gamma * (1 - terminal) * Q'_s(o_s', mu'(o'))
/// and its gradient with respect to the critic parameters.
inline LossAndGradient critic_loss(std::span<const Agent> agents, std::size_t s, const Batch& b, double gamma) {
  const Agent& ag = agents[s];
  const double m = static_cast<double>(b.size());
  const Matrix next_q = nn::forward<double>(ag.critic_target, detail::stack(b.next_obs[s], target_actions(agents, b)));
  const Eigen::RowVectorXd eta =
      b.rewards.row(static_cast<Eigen::Index>(s)) + gamma * b.not_done.cwiseProduct(next_q.row(0));
  nn::ForwardCache<double> cache;
  const Matrix q = nn::forward<double>(ag.critic, detail::stack(b.obs[s], b.actions), &cache);
  const Eigen::RowVectorXd diff = q.row(0) - eta;
  LossAndGradient out;
  out.loss = diff.squaredNorm() / m;
  out.grad.assign(ag.critic.parameters().size(), 0.0);
  const Matrix dq = (2.0 / m) * diff;
  nn::backward<double>(ag.critic, cache, dq, out.grad);
  return out;
}

/// Negated mean critic value with agent s's slice of the sampled joint action
/// replaced by mu_s(o_s), and its gradient with respect to the actor
/// parameters (chained through the critic's action input; critic frozen).
/// `loss` is -(1/M) sum Q, so descending `grad` ascends Q.
inline LossAndGradient actor_loss(std::span<const Agent> agents, std::size_t s, const Batch& b) {
  const Agent& ag = agents[s];
  const double m = static_cast<double>(b.size());
  nn::ForwardCache<double> acache, ccache;
  const Matrix mu = nn::forward<double>(ag.actor, b.obs[s], &acache);
  Matrix joint = b.actions;
  joint.middleRows(static_cast<Eigen::Index>(ag.action_offset), static_cast<Eigen::Index>(ag.action_size)) = mu;
  const Matrix q = nn::forward<double>(ag.critic, detail::stack(b.obs[s], joint), &ccache);
  LossAndGradient out;
  out.loss = -q.sum() / m;
  std::vector<double> critic_scratch(ag.critic.parameters().size());
  Matrix dx;
  const Matrix dq = Matrix::Constant(1, q.cols(), -1.0 / m);
  nn::backward<double>(ag.critic, ccache, dq, critic_scratch, &dx);
  const Matrix da = dx.middleRows(b.obs[s].rows() + static_cast<Eigen::Index>(ag.action_offset),
                                  static_cast<Eigen::Index>(ag.action_size));
  out.grad.assign(ag.actor.parameters().size(), 0.0);
  nn::backward<double>(ag.actor, acache, da, out.grad);
  return out;
}

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One Adam step on the critic. Returns the pre-step loss.
inline double critic_update(std::vector<Agent>& agents, std::size_t s, const Batch& b, double gamma) {
  const auto lg = critic_loss(agents, s, b, gamma);
  if (!std::isfinite(lg.loss)) throw TrainingAborted("non-finite critic loss for agent " + std::to_string(s));
  nn::adam_step<double>(agents[s].critic_opt, agents[s].critic, lg.grad);
  return lg.loss;
}

/// One Adam step on the actor. Returns the pre-step objective (mean Q).
inline double actor_update(std::vector<Agent>& agents, std::size_t s, const Batch& b) {
  const auto lg = actor_loss(agents, s, b);
  if (!std::isfinite(lg.loss)) throw TrainingAborted("non-finite actor objective for agent " + std::to_string(s));
  nn::adam_step<double>(agents[s].actor_opt, agents[s].actor, lg.grad);
  return -lg.loss;
}

// ---------------------------------------------------------------------------
// Learners and episodes

struct Learner {
  Algorithm algo = Algorithm::random;
  std::vector<Agent> agents;  // empty for random
  std::size_t obs_dim = 0;
  std::size_t joint_size = 0;
  std::vector<std::size_t> action_offsets;  // per vehicle, into the joint action
  std::size_t score_offset = 0;             // c_ddpg bandwidth scores
};

inline Learner make_learner(const sim::Environment& env, Algorithm algo, std::uint64_t seed) {
  const auto& sc = env.scenario();
  const auto& tp = sc.config().training;
  Learner l;
  l.algo = algo;
  std::size_t off = 0;
  for (const auto& v : sc.vehicles()) {
    l.action_offsets.push_back(off);
    off += policy::raw_action_size(v);
  }
  l.score_offset = off;
  l.joint_size = algo == Algorithm::c_ddpg ? off + sc.vehicles().size() : off;
  if (algo == Algorithm::random) return l;
  if (algo == Algorithm::c_ddpg) {
    l.obs_dim = central_state_size(sc);
    Rng rng = make_stream(seed, Stream::init, {0});
    l.agents.push_back(make_agent(l.obs_dim, 0, l.joint_size, l.joint_size, tp, rng));
    return l;
  }
  l.obs_dim = observation_size(sc);
  for (std::size_t v = 0; v < sc.vehicles().size(); ++v) {
    Rng rng = make_stream(seed, Stream::init, {v});
    l.agents.push_back(make_agent(l.obs_dim, l.action_offsets[v], policy::raw_action_size(sc.vehicles()[v]),
                                  l.joint_size, tp, rng));
  }
  return l;
}

struct EpisodeOptions {
  std::uint64_t seed = 1;
  std::uint64_t episode = 0;
  double noise_std = 0.0;
  bool record = true;  // keep transitions
};

struct EpisodeResult {
  std::vector<sim::SlotOutcome> slots;
  std::vector<sim::SlotDecision> decisions;
  std::vector<Transition> transitions;
  double cumulative_reward = 0.0;
};

inline std::vector<std::vector<double>> observe(const sim::Environment& env, const Learner& l,
                                                const sim::EpisodeState& st, int t) {
  if (l.algo == Algorithm::c_ddpg) return {encode_central_state(env, st, t)};
  std::vector<std::vector<double>> obs;
  if (l.algo == Algorithm::random) return obs;
  for (std::size_t v = 0; v < env.vehicle_count(); ++v) obs.push_back(encode_state(env, st, v, t));
  return obs;
}

/// Actions of every vehicle and edge for slot t.
inline sim::SlotDecision decide(const sim::Environment& env, const Learner& l,
                                const std::vector<std::vector<double>>& obs, int t, double noise_std,
                                Rng& explore, Rng& random_rng, std::vector<double>& joint) {
  const auto& sc = env.scenario();
  sim::SlotDecision d;
  d.raw.resize(env.vehicle_count());
  d.edge_actions.resize(env.edge_count());
  joint.assign(l.joint_size, 0.0);
  switch (l.algo) {
    case Algorithm::random:
      for (std::size_t v = 0; v < env.vehicle_count(); ++v) d.raw[v] = policy::random_raw_action(sc.vehicles()[v], random_rng);
      for (std::size_t e = 0; e < env.edge_count(); ++e)
        d.edge_actions[e] = policy::random_allocation(env.served_ids(e, t), sc.edges()[e].bandwidth_hz, random_rng);
      for (std::size_t v = 0; v < env.vehicle_count(); ++v)
        std::copy(d.raw[v].begin(), d.raw[v].end(), joint.begin() + static_cast<std::ptrdiff_t>(l.action_offsets[v]));
      return d;
    case Algorithm::c_ddpg: {
      joint = select_action(l.agents[0].actor, obs[0], noise_std, explore);
      for (std::size_t v = 0; v < env.vehicle_count(); ++v) {
        const auto begin = joint.begin() + static_cast<std::ptrdiff_t>(l.action_offsets[v]);
        d.raw[v].assign(begin, begin + static_cast<std::ptrdiff_t>(policy::raw_action_size(sc.vehicles()[v])));
      }
      const double temp = sc.config().training.bandwidth_temperature;
      for (std::size_t e = 0; e < env.edge_count(); ++e) {
        std::vector<double> scores;
        for (std::size_t v : env.served_by(e, t)) scores.push_back(joint[l.score_offset + v]);
        d.edge_actions[e] = policy::softmax_allocation(env.served_ids(e, t), scores, sc.edges()[e].bandwidth_hz, temp);
      }
      return d;
    }
    case Algorithm::proposed:
    case Algorithm::mac:
      for (std::size_t v = 0; v < env.vehicle_count(); ++v) {
        d.raw[v] = select_action(l.agents[v].actor, obs[v], noise_std, explore);
        std::copy(d.raw[v].begin(), d.raw[v].end(), joint.begin() + static_cast<std::ptrdiff_t>(l.action_offsets[v]));
      }
      for (std::size_t e = 0; e < env.edge_count(); ++e) d.edge_actions[e] = env.rank_allocation(e, t);
      return d;
  }
  return d;
}

/// Rolls one episode of |T| slots. Channel, exploration and random-policy
/// draws come from substreams keyed by (seed, episode), so the rollout is a
/// pure function of the learner's parameters and the options.
inline EpisodeResult run_episode(const sim::Environment& env, const Learner& l, const EpisodeOptions& opt) {
  const int H = env.horizon();
  const auto ch = sim::draw_channel(env.scenario(), opt.seed, opt.episode);
  Rng explore = make_stream(opt.seed, Stream::exploration, {opt.episode});
  Rng random_rng = make_stream(opt.seed, Stream::random_policy, {opt.episode});
  auto state = env.initial_state();
  EpisodeResult res;
  auto obs = observe(env, l, state, 0);
  std::vector<double> joint;
  for (int t = 0; t < H; ++t) {
    auto decision = decide(env, l, obs, t, opt.noise_std, explore, random_rng, joint);
    auto outcome = env.step(ch, state, t, decision);
    res.cumulative_reward += outcome.reward;
    auto next = observe(env, l, state, std::min(t + 1, H - 1));
    if (opt.record && l.algo != Algorithm::random) {
      Transition tr;
      tr.obs = obs;
      tr.next_obs = next;
      tr.joint_action = joint;
      if (l.algo == Algorithm::proposed) tr.rewards = outcome.difference_rewards;
      else tr.rewards.assign(l.agents.size(), outcome.reward);
      tr.terminal = t + 1 == H;
      res.transitions.push_back(std::move(tr));
    }
    obs = std::move(next);
    res.decisions.push_back(std::move(decision));
    res.slots.push_back(std::move(outcome));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Training

struct IterationLog {
  int iteration = 0;
  double cr = 0.0;
  std::vector<double> mean_dr;  // per vehicle, mean over slots
  double noise_std = 0.0;
};

struct TrainOptions {
  int iterations = 0;
  std::uint64_t seed = 1;
  bool learn = true;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const IterationLog&)> on_iteration;
};

struct TrainResult {
  Learner learner;
  std::vector<IterationLog> curve;
};

inline void save_checkpoints(const Learner& l, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < l.agents.size(); ++i) {
    const auto& a = l.agents[i];
    const std::pair<const char*, const nn::Mlp*> nets[] = {
        {"actor", &a.actor}, {"critic", &a.critic}, {"actor_target", &a.actor_target}, {"critic_target", &a.critic_target}};
    for (const auto& [name, net] : nets) {
      std::ofstream os(dir / ("agent" + std::to_string(i) + "_" + name + ".txt"));
      if (!os) throw std::runtime_error("cannot write checkpoint in " + dir.string());
      nn::save_checkpoint(os, *net);
    }
  }
}

inline double exploration_std(const TrainingParams& tp, int iteration) {
  return std::max(tp.noise_floor, tp.noise_std * std::pow(tp.noise_decay, iteration));
}

/// Per iteration: roll one noisy episode and store its transitions; once the
/// buffer holds a minibatch, each agent samples its own minibatch, takes one
/// critic step and one actor step; then every target network soft-updates.
inline TrainResult train(const sim::Environment& env, Algorithm algo, const TrainOptions& opt) {
  const auto& tp = env.scenario().config().training;
  TrainResult res;
  res.learner = make_learner(env, algo, opt.seed);
  Learner& l = res.learner;
  std::optional<ReplayBuffer> buffer;
  if (algo != Algorithm::random) buffer.emplace(tp.buffer_capacity, l.agents.size(), l.obs_dim, l.joint_size);

  for (int it = 0; it < opt.iterations; ++it) {
    const double noise = exploration_std(tp, it);
    auto ep = run_episode(env, l, {opt.seed, static_cast<std::uint64_t>(it), noise, buffer.has_value()});
    IterationLog log;
    log.iteration = it;
    log.cr = ep.cumulative_reward;
    log.noise_std = noise;
    log.mean_dr.assign(env.vehicle_count(), 0.0);
    for (const auto& s : ep.slots)
      for (std::size_t v = 0; v < env.vehicle_count(); ++v) log.mean_dr[v] += s.difference_rewards[v];
    for (auto& x : log.mean_dr) x /= static_cast<double>(std::max<std::size_t>(1, ep.slots.size()));

    if (buffer) {
      for (const auto& tr : ep.transitions) buffer->push(tr);
      if (opt.learn && buffer->size() >= tp.batch_size) {
        try {
          for (std::size_t s = 0; s < l.agents.size(); ++s) {
            Rng rng = make_stream(opt.seed, Stream::replay, {static_cast<std::uint64_t>(it), s});
            const auto idx = buffer->sample_indices(tp.batch_size, rng);
            const auto batch = gather(*buffer, idx);
            critic_update(l.agents, s, batch, tp.gamma);
            actor_update(l.agents, s, batch);
          }
          for (auto& a : l.agents) {
            nn::soft_update(a.actor_target, a.actor, tp.soft_update);
            nn::soft_update(a.critic_target, a.critic, tp.soft_update);
          }
        } catch (const nn::NonFiniteGradient& e) {
          if (opt.checkpoint_dir) save_checkpoints(l, *opt.checkpoint_dir);
          throw TrainingAborted(std::string("iteration ") + std::to_string(it) + ": " + e.what());
        } catch (const TrainingAborted& e) {
          if (opt.checkpoint_dir) save_checkpoints(l, *opt.checkpoint_dir);
          throw TrainingAborted(std::string("iteration ") + std::to_string(it) + ": " + e.what());
        }
      }
    }
    if (opt.on_iteration) opt.on_iteration(log);
    res.curve.push_back(std::move(log));
  }
  if (opt.checkpoint_dir && !l.agents.empty()) save_checkpoints(l, *opt.checkpoint_dir);
  return res;
}

}  // namespace vcps::marl
