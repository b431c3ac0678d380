#pragma once

// Joint (state, action) encoding shared by the reward, discriminator and critic.
//
// A batch of joint states is an (M*D) x B matrix whose column b holds agent
// 0..M-1 observations back to back; viewed as D x (M*B) the column b*M + i is
// agent i of sample b. Joint actions follow the same layout with 3 rows per
// agent. The encoded joint vector is [s^1, a^1, ..., s^M, a^M].

#include <Eigen/Dense>

namespace lepus {

inline int JointWidth(int n_agents, int obs_dim) { return n_agents * (obs_dim + 3); }

// states: (M*D) x B, actions: (M*3) x B -> (M*(D+3)) x B. `scale` (length D or
// empty) multiplies every agent's observation channels.
Eigen::MatrixXd EncodeJoint(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, int n_agents,
                            const Eigen::VectorXd& scale = Eigen::VectorXd());

// Single joint sample from D x M states and 3 x M actions.
Eigen::VectorXd EncodeJointSample(const Eigen::MatrixXd& state, const Eigen::MatrixXd& action,
                                  const Eigen::VectorXd& scale = Eigen::VectorXd());

// Gradient w.r.t. the action slots of an encoded joint batch: (M*(D+3)) x B -> 3 x (M*B).
Eigen::MatrixXd ExtractActionGrad(const Eigen::MatrixXd& joint_grad, int n_agents, int obs_dim);

// Reinterpret (M*3) x B <-> 3 x (M*B) (same memory layout).
Eigen::MatrixXd AgentMajor(const Eigen::MatrixXd& joint, int rows_per_agent, int n_agents);
Eigen::MatrixXd JointMajor(const Eigen::MatrixXd& agent_major, int rows_per_agent, int n_agents);

}  // namespace lepus
