#pragma once

// Shared-parameter actor-critic joint training: one policy for all agents, one
// centralized critic over the joint (S, A), target copies, OU exploration and a
// replay buffer.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lepus/nn.hpp"
#include "lepus/random.hpp"
#include "lepus/rnd_reward.hpp"
#include "lepus/sim.hpp"

namespace lepus::trainer {

struct Transition {
  Eigen::VectorXd state;       // M*D, agent-major
  Eigen::VectorXd action;      // M*3, as executed
  Eigen::VectorXd rewards;     // M per-agent R_lepus
  Eigen::VectorXd next_state;  // M*D
  bool done = false;
  sim::Termination reason = sim::Termination::kNone;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void Push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

  // n distinct indices drawn uniformly; requires n <= size().
  std::vector<std::size_t> SampleIndices(std::size_t n);

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
  Rng rng_;
};

struct OuParams {
  double theta = 0.15;
  double sigma = 0.2;
  double mu = 0.0;
};

// One independent OU process per (action dim, agent).
class OuNoise {
 public:
  OuNoise(int n_agents, OuParams params, std::uint64_t seed);
  void Reset();
  // x <- x + theta (mu - x) dt + sigma sqrt(dt) eps
  const Eigen::MatrixXd& Step(double dt);
  const Eigen::MatrixXd& value() const { return x_; }
  void set_value(const Eigen::MatrixXd& x);
  const OuParams& params() const { return params_; }

 private:
  OuParams params_;
  Eigen::MatrixXd x_;  // 3 x M
  Rng rng_;
  std::normal_distribution<double> normal_;
};

struct EnsembleConfig {
  double gamma = 0.99;
  double tau = 1e-3;
  double policy_lr = 1e-4;
  double critic_lr = 1e-3;
};

struct AgentEnsemble {
  int n_agents = 0;
  int obs_dim = 0;
  Eigen::VectorXd scale;
  EnsembleConfig config;
  nn::Mlp policy;
  nn::Mlp q_net;
  nn::Mlp target_policy;
  nn::Mlp target_q;
  nn::AdamState policy_adam;
  nn::AdamState q_adam;
  std::string config_digest;

  nlohmann::json ToJson() const;
  static AgentEnsemble FromJson(const nlohmann::json& j);
};

// Fresh policy and critic from `seed`; `pretrained` replaces the policy (and
// its target) when given.
AgentEnsemble BuildEnsemble(int n_agents, int obs_dim, const Eigen::VectorXd& scale, const EnsembleConfig& config,
                            std::uint64_t seed, const std::optional<nn::Mlp>& pretrained = std::nullopt);

// observations: D x M. Adds the current noise value when explore is set (the
// caller advances the noise), then clamps to the action bounds.
Eigen::MatrixXd SelectActions(const AgentEnsemble& ens, const Eigen::MatrixXd& observations, const OuNoise* noise,
                              bool explore);

struct Batch {
  Eigen::MatrixXd states;       // (M*D) x N
  Eigen::MatrixXd actions;      // (M*3) x N
  Eigen::MatrixXd next_states;  // (M*D) x N
  Eigen::VectorXd team_reward;  // N, mean over agents
  Eigen::VectorXd done;         // N, 0 or 1
};
Batch MakeBatch(std::span<const Transition* const> items);
Batch SampleBatch(ReplayBuffer& buffer, std::size_t n);

// y = r + gamma (1 - done) Q'(S', mu'(S')).
Eigen::VectorXd CriticTargets(const AgentEnsemble& ens, const Batch& batch, double reward_scale = 1.0);
// One Adam step on mean (y - Q(S, A))^2; returns the loss before the step.
double CriticUpdate(AgentEnsemble& ens, const Batch& batch, double reward_scale = 1.0);
// One Adam step ascending mean Q(S, mu(S)); returns the objective before the step.
double ActorUpdate(AgentEnsemble& ens, const Batch& batch);
void TargetSync(AgentEnsemble& ens);

struct TrainConfig {
  int episodes = 100;
  long tick_budget = 0;  // 0: unlimited
  std::size_t buffer_capacity = 100000;
  std::size_t warmup = 1000;
  std::size_t minibatch = 32;
  double reward_scale = 1.0;
  OuParams ou;
};

struct EpisodeMetrics {
  int episode = 0;
  int steps = 0;
  std::vector<double> distance;
  std::vector<int> collisions;
  double mean_rd = 0.0;
  double mean_reward = 0.0;
  double critic_loss = 0.0;  // mean over this episode's updates (NaN-free: 0 when none)
  double actor_objective = 0.0;
  int updates = 0;
  sim::Termination termination = sim::Termination::kNone;
};

struct TrainResult {
  AgentEnsemble ensemble;
  std::vector<EpisodeMetrics> metrics;
  long ticks = 0;
  bool budget_exhausted = false;
};

TrainResult Train(AgentEnsemble ensemble, const rnd::RndModel& rnd, const sim::Track& track,
                  const sim::SimConfig& sim_config, const TrainConfig& config, std::uint64_t seed);

void WriteMetricsCsv(const std::vector<EpisodeMetrics>& metrics, int n_agents, const std::filesystem::path& path);

}  // namespace lepus::trainer
