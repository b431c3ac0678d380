#pragma once

// Joint random-distillation reward: a frozen random network and a trained
// distillation network over encoded joint (S, A) pairs. Their squared output
// disagreement d^2 gives the shared reward exp(-v * d^2).

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "lepus/dataset.hpp"
#include "lepus/nn.hpp"

namespace lepus::rnd {

class RndModel {
 public:
  RndModel() = default;
  RndModel(int n_agents, int obs_dim, double sharpness, nn::Mlp random_net, nn::Mlp distill_net);

  int n_agents() const { return n_agents_; }
  int obs_dim() const { return obs_dim_; }
  int input_dim() const { return distill_net_.input_dim(); }
  double sharpness() const { return sharpness_; }
  void set_sharpness(double v);

  const nn::Mlp& random_net() const { return random_net_; }
  const nn::Mlp& distill_net() const { return distill_net_; }
  nn::Mlp& mutable_distill_net() { return distill_net_; }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return stddev_; }
  void SetNormalization(Eigen::VectorXd mean, Eigen::VectorXd stddev);

  // Encoded, standardized joint inputs: (M*(D+3)) x B.
  Eigen::MatrixXd Normalize(const Eigen::MatrixXd& joint_states, const Eigen::MatrixXd& joint_actions) const;
  // Signed output disagreement f_distill - f_random per column.
  Eigen::VectorXd Disagreement(const Eigen::MatrixXd& joint_states, const Eigen::MatrixXd& joint_actions) const;

  nlohmann::json ToJson() const;
  static RndModel FromJson(const nlohmann::json& j);

 private:
  int n_agents_ = 0;
  int obs_dim_ = 0;
  double sharpness_ = 250000.0;
  nn::Mlp random_net_;
  nn::Mlp distill_net_;
  Eigen::VectorXd mean_;
  Eigen::VectorXd stddev_;
};

// Random net: input -> 128 LeakyReLU -> 1. Distillation net: input -> 4 x 128
// LeakyReLU -> 1. Normalization starts as identity (mean 0, std 1).
RndModel BuildRnd(int n_agents, int obs_dim, double sharpness, std::uint64_t seed);

// Per-dimension mean / std of encoded expert pairs; std below 1e-6 becomes 1.
void FitNormalization(RndModel& model, const expert::JointTrajectoryDataset& dataset);

struct DistillConfig {
  int iters = 200;
  int minibatch = 256;
  double learning_rate = 1e-3;
};

// Minimizes mean (f_distill - f_random)^2 on sampled expert pairs with Adam.
// Returns the minibatch loss before each iteration's step.
std::vector<double> TrainDistillation(RndModel& model, const expert::JointTrajectoryDataset& dataset,
                                      const DistillConfig& config, std::uint64_t seed);

// exp(-v * d^2) for one joint sample (D x M state, 3 x M action).
double RdJointReward(const RndModel& model, const Eigen::MatrixXd& state, const Eigen::MatrixXd& action);
Eigen::VectorXd RdJointRewardBatch(const RndModel& model, const Eigen::MatrixXd& joint_states,
                                   const Eigen::MatrixXd& joint_actions);
// Reward from a given disagreement; exposed for the algebraic properties.
double RewardFromDisagreement(double sharpness, double disagreement);

double CombinedReward(double g_reward, double rd);

// Rescales v so the median reward over the dataset's pairs equals `target`.
double CalibrateSharpness(RndModel& model, const expert::JointTrajectoryDataset& dataset, double target = 0.9);

// Mean reward over the dataset's pairs (optionally with replaced actions).
double MeanReward(const RndModel& model, const expert::JointTrajectoryDataset& dataset);
// Mean reward over the dataset's states paired with uniformly random actions.
double MeanRandomActionReward(const RndModel& model, const expert::JointTrajectoryDataset& dataset,
                              std::uint64_t seed);

}  // namespace lepus::rnd
