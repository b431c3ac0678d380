#pragma once

// Adversarial warm start of the shared policy: a joint discriminator separates
// expert (S, A) pairs from policy-generated ones, and the policy is pushed
// toward pairs the discriminator scores as expert-like.

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lepus/dataset.hpp"
#include "lepus/nn.hpp"

namespace lepus::pretrain {

inline constexpr double kLogitClamp = 40.0;

// kTanh300x600: joint -> 300 tanh -> 600 tanh -> 1.
// kLeaky128x64x32: joint -> 128 -> 64 -> 32 LeakyReLU -> 1.
enum class DiscriminatorArch { kTanh300x600, kLeaky128x64x32 };
std::string ArchName(DiscriminatorArch arch);
DiscriminatorArch ArchFromName(const std::string& name);

struct Discriminator {
  DiscriminatorArch arch = DiscriminatorArch::kTanh300x600;
  int n_agents = 0;
  int obs_dim = 0;
  Eigen::VectorXd scale;  // per-channel observation scale (length D)
  nn::Mlp net;            // outputs a logit
  nn::AdamState adam;

  nlohmann::json ToJson() const;
  static Discriminator FromJson(const nlohmann::json& j);
};

Discriminator BuildDiscriminator(int n_agents, int obs_dim, DiscriminatorArch arch, double learning_rate,
                                 const Eigen::VectorXd& scale, std::uint64_t seed);

// Logits clamped to +-kLogitClamp; one per column.
Eigen::VectorXd DiscriminatorLogits(const Discriminator& dis, const Eigen::MatrixXd& joint_states,
                                    const Eigen::MatrixXd& joint_actions);
// Sigmoid of the clamped logits, strictly inside (0, 1).
Eigen::VectorXd DiscriminatorScore(const Discriminator& dis, const Eigen::MatrixXd& joint_states,
                                   const Eigen::MatrixXd& joint_actions);

// mean log sigmoid(z_e) + mean log(1 - sigmoid(z_p)), evaluated stably.
double AdversarialObjective(const Eigen::VectorXd& expert_logits, const Eigen::VectorXd& policy_logits);

// One Adam ascent step on the objective; returns the objective before the step.
double DiscriminatorUpdate(Discriminator& dis, const Eigen::MatrixXd& expert_states,
                           const Eigen::MatrixXd& expert_actions, const Eigen::MatrixXd& policy_states,
                           const Eigen::MatrixXd& policy_actions);

// One Adam descent step on -mean Dis(S, policy(S)); returns the loss before the
// step. States are (M*D) x B joint columns.
double PolicyPretrainUpdate(nn::Mlp& policy, nn::AdamState& policy_adam, const Discriminator& dis,
                            const Eigen::MatrixXd& joint_states);

// Mean Dis(S, policy(S)) over the given joint states.
double MeanPolicyScore(const Discriminator& dis, const nn::Mlp& policy, const Eigen::MatrixXd& joint_states);

struct PretrainConfig {
  int dis_iter = 2000;
  int batch = 256;
  double dis_learning_rate = 1e-4;
  double policy_learning_rate = 1e-5;
  double expert_fraction = 0.5;
  DiscriminatorArch arch = DiscriminatorArch::kTanh300x600;
};

struct PretrainCurves {
  std::vector<double> dis_objective;  // before each discriminator step
  std::vector<double> policy_loss;    // before each policy step
  std::vector<double> policy_score;   // -policy_loss
};

struct PretrainResult {
  nn::Mlp policy;
  Discriminator dis;
  nn::AdamState policy_adam;
  PretrainCurves curves;
};

// dis_iter alternating iterations: one discriminator step, then one policy
// step, both on minibatches drawn from the leading expert_fraction of rounds.
PretrainResult AdversarialPretrain(nn::Mlp policy, Discriminator dis, const expert::JointTrajectoryDataset& dataset,
                                   const PretrainConfig& config, std::uint64_t seed);

}  // namespace lepus::pretrain
