#pragma once

// Shared driving policy (one parameter set for every agent) and the joint
// critic architecture. Observations are multiplied by a fixed per-channel scale
// before entering any network.

#include <Eigen/Dense>

#include "lepus/nn.hpp"
#include "lepus/random.hpp"

namespace lepus::policy {

// D -> 300 ReLU -> 400 ReLU -> 3 (pre-squash).
nn::Mlp BuildPolicy(int obs_dim, Rng& rng);
// M*(D+3) -> 300 ReLU -> 600 ReLU -> 1.
nn::Mlp BuildCritic(int n_agents, int obs_dim, Rng& rng);

// Row 0 tanh (steering), rows 1-2 sigmoid (acceleration, braking).
Eigen::MatrixXd Squash(const Eigen::MatrixXd& pre);
// Elementwise derivative of Squash at `pre`.
Eigen::MatrixXd SquashDerivative(const Eigen::MatrixXd& pre);

// Clamp to [-1,1] x [0,1] x [0,1].
void ClampActions(Eigen::MatrixXd& actions);

struct PolicyPass {
  nn::ForwardCache cache;
  Eigen::MatrixXd actions;  // 3 x N, squashed
};

// agent_states: D x N raw observations (any mix of agents and samples).
PolicyPass RunSharedPolicy(const nn::Mlp& policy, const Eigen::MatrixXd& agent_states, const Eigen::VectorXd& scale);

// Parameter gradient of sum_n <action_grad_n, squash(policy(s_n))>.
nn::ParamBuffers SharedPolicyGrad(const nn::Mlp& policy, const PolicyPass& pass, const Eigen::MatrixXd& action_grad);

// Deterministic joint action for a D x M joint state.
Eigen::MatrixXd Act(const nn::Mlp& policy, const Eigen::MatrixXd& joint_state, const Eigen::VectorXd& scale);

}  // namespace lepus::policy
