#include "lepus/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <unordered_set>

#include "lepus/error.hpp"
#include "lepus/joint.hpp"
#include "lepus/policy.hpp"

namespace lepus::trainer {
namespace {

Eigen::VectorXd Flat(const Eigen::MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

Eigen::MatrixXd JointPolicyActions(const nn::Mlp& policy, const AgentEnsemble& ens, const Eigen::MatrixXd& states,
                                   policy::PolicyPass* keep = nullptr) {
  policy::PolicyPass pass = policy::RunSharedPolicy(policy, AgentMajor(states, ens.obs_dim, ens.n_agents), ens.scale);
  Eigen::MatrixXd joint = JointMajor(pass.actions, 3, ens.n_agents);
  if (keep) *keep = std::move(pass);
  return joint;
}

void CheckBatch(const AgentEnsemble& ens, const Batch& batch) {
  const Eigen::Index n = batch.states.cols();
  if (n == 0) throw ValueError("empty training batch");
  if (batch.states.rows() != ens.n_agents * ens.obs_dim || batch.next_states.rows() != batch.states.rows() ||
      batch.actions.rows() != ens.n_agents * 3 || batch.actions.cols() != n || batch.next_states.cols() != n ||
      batch.team_reward.size() != n || batch.done.size() != n)
    throw ShapeError("batch does not match the ensemble (M=" + std::to_string(ens.n_agents) +
                     ", D=" + std::to_string(ens.obs_dim) + ")");
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity == 0) throw ValueError("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::Push(Transition t) {
  if (!t.rewards.allFinite()) throw ValueError("non-finite reward pushed to the replay buffer");
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::SampleIndices(std::size_t n) {
  if (n > items_.size()) throw ValueError("minibatch larger than the replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out;
  out.reserve(n);
  if (2 * n > items_.size()) {
    // Dense case: partial Fisher-Yates over all indices.
    std::vector<std::size_t> all(items_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> rest(i, all.size() - 1);
      std::swap(all[i], all[rest(rng_)]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < n) {
    const std::size_t i = pick(rng_);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

OuNoise::OuNoise(int n_agents, OuParams params, std::uint64_t seed)
    : params_(params), x_(Eigen::MatrixXd::Constant(3, n_agents, params.mu)), rng_(seed) {
  if (n_agents < 1) throw ValueError("OU noise needs at least one agent");
  if (!(params.theta >= 0.0) || !(params.sigma >= 0.0)) throw ValueError("OU parameters must be non-negative");
}

void OuNoise::Reset() { x_.setConstant(params_.mu); }

const Eigen::MatrixXd& OuNoise::Step(double dt) {
  if (!(dt > 0.0)) throw ValueError("OU step needs dt > 0");
  const double sd = params_.sigma * std::sqrt(dt);
  for (Eigen::Index k = 0; k < x_.size(); ++k) {
    const double eps = normal_(rng_);
    x_(k) += params_.theta * (params_.mu - x_(k)) * dt + sd * eps;
  }
  return x_;
}

void OuNoise::set_value(const Eigen::MatrixXd& x) {
  if (x.rows() != x_.rows() || x.cols() != x_.cols()) throw ShapeError("OU value shape mismatch");
  x_ = x;
}

nlohmann::json AgentEnsemble::ToJson() const {
  return {{"format", "lepus.ensemble"},
          {"version", 1},
          {"n_agents", n_agents},
          {"obs_dim", obs_dim},
          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())},
          {"gamma", config.gamma},
          {"tau", config.tau},
          {"policy_lr", config.policy_lr},
          {"critic_lr", config.critic_lr},
          {"policy", nn::ToJson(policy)},
          {"q_net", nn::ToJson(q_net)},
          {"target_policy", nn::ToJson(target_policy)},
          {"target_q", nn::ToJson(target_q)},
          {"policy_adam", policy_adam.ToJson()},
          {"q_adam", q_adam.ToJson()},
          {"config_digest", config_digest}};
}

AgentEnsemble AgentEnsemble::FromJson(const nlohmann::json& j) {
  try {
    if (j.at("format") != "lepus.ensemble" || j.at("version") != 1) throw FormatError("not an ensemble checkpoint");
    AgentEnsemble ens;
    ens.n_agents = j.at("n_agents").get<int>();
    ens.obs_dim = j.at("obs_dim").get<int>();
    auto scale = j.at("scale").get<std::vector<double>>();
    if (static_cast<int>(scale.size()) != ens.obs_dim) throw FormatError("ensemble scale length mismatch");
    ens.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), ens.obs_dim);
    ens.config = {j.at("gamma").get<double>(), j.at("tau").get<double>(), j.at("policy_lr").get<double>(),
                  j.at("critic_lr").get<double>()};
    ens.policy = nn::MlpFromJson(j.at("policy"));
    ens.q_net = nn::MlpFromJson(j.at("q_net"));
    ens.target_policy = nn::MlpFromJson(j.at("target_policy"), ens.policy);
    ens.target_q = nn::MlpFromJson(j.at("target_q"), ens.q_net);
    if (ens.policy.input_dim() != ens.obs_dim || ens.policy.output_dim() != 3 ||
        ens.q_net.input_dim() != JointWidth(ens.n_agents, ens.obs_dim) || ens.q_net.output_dim() != 1)
      throw FormatError("ensemble network shapes do not match M and D");
    ens.policy_adam = nn::AdamState::FromJson(j.at("policy_adam"), ens.policy);
    ens.q_adam = nn::AdamState::FromJson(j.at("q_adam"), ens.q_net);
    ens.config_digest = j.at("config_digest").get<std::string>();
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ensemble checkpoint: ") + e.what());
  }
}

AgentEnsemble BuildEnsemble(int n_agents, int obs_dim, const Eigen::VectorXd& scale, const EnsembleConfig& config,
                            std::uint64_t seed, const std::optional<nn::Mlp>& pretrained) {
  if (n_agents < 1 || obs_dim < 1) throw ValueError("ensemble needs M >= 1 and D >= 1");
  if (scale.size() != 0 && scale.size() != obs_dim) throw ShapeError("feature scale length mismatch");
  if (!(config.tau > 0.0 && config.tau <= 1.0)) throw ValueError("soft update proportion must lie in (0, 1]");
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ValueError("discount must lie in [0, 1]");
  AgentEnsemble ens;
  ens.n_agents = n_agents;
  ens.obs_dim = obs_dim;
  ens.scale = scale.size() == 0 ? Eigen::VectorXd::Ones(obs_dim) : scale;
  ens.config = config;
  Rng policy_rng = MakeRng(seed, "policy_init");
  Rng critic_rng = MakeRng(seed, "critic_init");
  ens.policy = policy::BuildPolicy(obs_dim, policy_rng);
  if (pretrained) {
    if (!pretrained->SameArchitecture(ens.policy)) throw ShapeError("pre-trained policy architecture mismatch");
    ens.policy = *pretrained;
  }
  ens.q_net = policy::BuildCritic(n_agents, obs_dim, critic_rng);
  ens.target_policy = ens.policy;
  ens.target_q = ens.q_net;
  ens.policy_adam = nn::AdamState(ens.policy, {config.policy_lr});
  ens.q_adam = nn::AdamState(ens.q_net, {config.critic_lr});
  return ens;
}

Eigen::MatrixXd SelectActions(const AgentEnsemble& ens, const Eigen::MatrixXd& observations, const OuNoise* noise,
                              bool explore) {
  if (observations.rows() != ens.obs_dim || observations.cols() != ens.n_agents)
    throw ShapeError("observations must be " + std::to_string(ens.obs_dim) + " x " + std::to_string(ens.n_agents));
  Eigen::MatrixXd a = policy::Act(ens.policy, observations, ens.scale);
  if (explore && noise) {
    if (noise->value().cols() != ens.n_agents) throw ShapeError("noise agent count mismatch");
    a += noise->value();
  }
  policy::ClampActions(a);
  return a;
}

Batch MakeBatch(std::span<const Transition* const> items) {
  if (items.empty()) throw ValueError("empty training batch");
  const auto n = static_cast<Eigen::Index>(items.size());
  const Transition& first = *items.front();
  Batch b;
  b.states.resize(first.state.size(), n);
  b.actions.resize(first.action.size(), n);
  b.next_states.resize(first.next_state.size(), n);
  b.team_reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Transition& t = *items[static_cast<std::size_t>(c)];
    if (t.state.size() != b.states.rows() || t.action.size() != b.actions.rows() ||
        t.next_state.size() != b.next_states.rows())
      throw ShapeError("inconsistent transition shapes in batch");
    b.states.col(c) = t.state;
    b.actions.col(c) = t.action;
    b.next_states.col(c) = t.next_state;
    b.team_reward(c) = t.rewards.mean();
    b.done(c) = t.done ? 1.0 : 0.0;
  }
  return b;
}

Batch SampleBatch(ReplayBuffer& buffer, std::size_t n) {
  std::vector<const Transition*> items;
  for (std::size_t i : buffer.SampleIndices(n)) items.push_back(&buffer.at(i));
  return MakeBatch(items);
}

Eigen::VectorXd CriticTargets(const AgentEnsemble& ens, const Batch& batch, double reward_scale) {
  CheckBatch(ens, batch);
  const Eigen::MatrixXd next_actions = JointPolicyActions(ens.target_policy, ens, batch.next_states);
  const Eigen::MatrixXd q_next =
      nn::Forward(ens.target_q, EncodeJoint(batch.next_states, next_actions, ens.n_agents, ens.scale));
  Eigen::VectorXd y = reward_scale * batch.team_reward +
                      ens.config.gamma * (1.0 - batch.done.array()).matrix().cwiseProduct(q_next.row(0).transpose());
  if (!y.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < y.size() && std::isfinite(y(bad)); ++bad) {
    }
    throw ValueError("non-finite critic target at sample " + std::to_string(bad) + " (reward " +
                     std::to_string(batch.team_reward(bad)) + ", Q' " + std::to_string(q_next(0, bad)) + ")");
  }
  return y;
}

double CriticUpdate(AgentEnsemble& ens, const Batch& batch, double reward_scale) {
  const Eigen::VectorXd y = CriticTargets(ens, batch, reward_scale);
  const nn::ForwardCache cache =
      nn::ForwardWithCache(ens.q_net, EncodeJoint(batch.states, batch.actions, ens.n_agents, ens.scale));
  const Eigen::RowVectorXd diff = cache.output().row(0) - y.transpose();
  const auto n = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n;
  const Eigen::MatrixXd upstream = (2.0 / n) * diff;
  ens.q_adam.Step(ens.q_net, nn::Backward(ens.q_net, cache, upstream, false).grads);
  return loss;
}

double ActorUpdate(AgentEnsemble& ens, const Batch& batch) {
  CheckBatch(ens, batch);
  policy::PolicyPass pass;
  const Eigen::MatrixXd actions = JointPolicyActions(ens.policy, ens, batch.states, &pass);
  const nn::ForwardCache cache =
      nn::ForwardWithCache(ens.q_net, EncodeJoint(batch.states, actions, ens.n_agents, ens.scale));
  const auto n = static_cast<double>(batch.states.cols());
  const double objective = cache.output().mean();
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(1, batch.states.cols(), -1.0 / n);
  const Eigen::MatrixXd action_grad =
      ExtractActionGrad(nn::InputGradient(ens.q_net, cache, upstream), ens.n_agents, ens.obs_dim);
  ens.policy_adam.Step(ens.policy, policy::SharedPolicyGrad(ens.policy, pass, action_grad));
  return objective;
}

void TargetSync(AgentEnsemble& ens) {
  nn::SoftUpdate(ens.target_policy, ens.policy, ens.config.tau);
  nn::SoftUpdate(ens.target_q, ens.q_net, ens.config.tau);
}

TrainResult Train(AgentEnsemble ensemble, const rnd::RndModel& rnd, const sim::Track& track,
                  const sim::SimConfig& sim_config, const TrainConfig& config, std::uint64_t seed) {
  sim_config.Validate();
  if (rnd.n_agents() != sim_config.n_agents || rnd.obs_dim() != sim_config.obs_dim)
    throw ConfigError("reward model (M=" + std::to_string(rnd.n_agents()) + ", D=" + std::to_string(rnd.obs_dim()) +
                      ") does not match the scenario (M=" + std::to_string(sim_config.n_agents) +
                      ", D=" + std::to_string(sim_config.obs_dim) + ")");
  if (ensemble.n_agents != sim_config.n_agents || ensemble.obs_dim != sim_config.obs_dim)
    throw ConfigError("ensemble does not match the scenario's M and D");
  if (config.episodes < 0 || config.minibatch == 0 || config.tick_budget < 0)
    throw ConfigError("invalid training schedule");
  if (config.warmup < config.minibatch) throw ConfigError("warmup must be at least the minibatch size");

  TrainResult result;
  const int m = sim_config.n_agents;
  sim::Simulator simulator(track, sim_config);
  ReplayBuffer buffer(config.buffer_capacity, DeriveSeed(seed, "replay"));
  OuNoise noise(m, config.ou, DeriveSeed(seed, "ou_noise"));

  for (int ep = 0; ep < config.episodes; ++ep) {
    if (config.tick_budget > 0 && result.ticks >= config.tick_budget) {
      result.budget_exhausted = true;
      break;
    }
    simulator.Reset(DeriveSeed(seed, "train_episode", static_cast<std::uint64_t>(ep)));
    noise.Reset();
    EpisodeMetrics em;
    em.episode = ep;
    em.collisions.assign(static_cast<std::size_t>(m), 0);
    double rd_sum = 0.0, reward_sum = 0.0, loss_sum = 0.0, objective_sum = 0.0;

    while (!simulator.done()) {
      if (config.tick_budget > 0 && result.ticks >= config.tick_budget) {
        result.budget_exhausted = true;
        break;
      }
      const Eigen::MatrixXd state = simulator.joint_state();
      noise.Step(sim_config.dt);
      const Eigen::MatrixXd action = SelectActions(ensemble, state, &noise, true);
      const sim::StepOutcome out = simulator.Step(action);
      const double rd = rnd::RdJointReward(rnd, state, action);
      Eigen::VectorXd rewards(m);
      for (int i = 0; i < m; ++i) rewards(i) = rnd::CombinedReward(out.g_reward(i), rd);
      for (const auto& [a, b] : out.collisions) {
        ++em.collisions[static_cast<std::size_t>(a)];
        ++em.collisions[static_cast<std::size_t>(b)];
      }
      Transition t;
      t.state = Flat(state);
      t.action = Flat(action);
      t.rewards = rewards;
      t.next_state = Flat(out.observations);
      t.reason = out.termination.kind;
      t.done = out.termination.terminal() && out.termination.kind != sim::Termination::kTimeLimit;
      buffer.Push(std::move(t));
      rd_sum += rd;
      reward_sum += rewards.mean();
      ++em.steps;
      ++result.ticks;

      if (buffer.size() >= config.warmup) {
        const Batch batch = SampleBatch(buffer, config.minibatch);
        loss_sum += CriticUpdate(ensemble, batch, config.reward_scale);
        objective_sum += ActorUpdate(ensemble, batch);
        TargetSync(ensemble);
        ++em.updates;
      }
    }
    for (const auto& car : simulator.cars()) em.distance.push_back(std::max(0.0, car.lap_progress));
    em.termination = simulator.verdict().kind;
    if (em.steps > 0) {
      em.mean_rd = rd_sum / em.steps;
      em.mean_reward = reward_sum / em.steps;
    }
    if (em.updates > 0) {
      em.critic_loss = loss_sum / em.updates;
      em.actor_objective = objective_sum / em.updates;
    }
    result.metrics.push_back(std::move(em));
  }
  result.ensemble = std::move(ensemble);
  return result;
}

void WriteMetricsCsv(const std::vector<EpisodeMetrics>& metrics, int n_agents, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << std::setprecision(17);
  out << "episode,steps";
  for (int i = 0; i < n_agents; ++i) out << ",distance_" << i;
  for (int i = 0; i < n_agents; ++i) out << ",collisions_" << i;
  out << ",mean_rd,mean_reward,critic_loss,actor_objective,updates,termination\n";
  for (const auto& em : metrics) {
    out << em.episode << ',' << em.steps;
    for (double d : em.distance) out << ',' << d;
    for (int c : em.collisions) out << ',' << c;
    out << ',' << em.mean_rd << ',' << em.mean_reward << ',' << em.critic_loss << ',' << em.actor_objective << ','
        << em.updates << ',' << sim::TerminationName(em.termination) << '\n';
  }
  if (!out) throw Error("io_error", "failed writing " + path.string());
}

}  // namespace lepus::trainer
