#include "lepus/joint.hpp"

#include <string>

#include "lepus/error.hpp"

namespace lepus {

Eigen::MatrixXd EncodeJoint(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions, int n_agents,
                            const Eigen::VectorXd& scale) {
  if (n_agents < 1 || states.rows() % n_agents != 0)
    throw ShapeError("joint states rows must be a multiple of the agent count");
  const int d = static_cast<int>(states.rows()) / n_agents;
  if (actions.rows() != 3 * n_agents || actions.cols() != states.cols())
    throw ShapeError("joint actions must be " + std::to_string(3 * n_agents) + " x " +
                     std::to_string(states.cols()));
  if (scale.size() != 0 && scale.size() != d) throw ShapeError("feature scale length mismatch");
  Eigen::MatrixXd out(JointWidth(n_agents, d), states.cols());
  for (int i = 0; i < n_agents; ++i) {
    const int row = i * (d + 3);
    if (scale.size() == 0)
      out.middleRows(row, d) = states.middleRows(i * d, d);
    else
      out.middleRows(row, d) = scale.asDiagonal() * states.middleRows(i * d, d);
    out.middleRows(row + d, 3) = actions.middleRows(i * 3, 3);
  }
  return out;
}

Eigen::VectorXd EncodeJointSample(const Eigen::MatrixXd& state, const Eigen::MatrixXd& action,
                                  const Eigen::VectorXd& scale) {
  if (state.cols() != action.cols() || action.rows() != 3)
    throw ShapeError("joint sample: state is D x M, action must be 3 x M");
  const auto m = static_cast<int>(state.cols());
  Eigen::Map<const Eigen::VectorXd> s(state.data(), state.size());
  Eigen::Map<const Eigen::VectorXd> a(action.data(), action.size());
  return EncodeJoint(Eigen::MatrixXd(s), Eigen::MatrixXd(a), m, scale);
}

Eigen::MatrixXd ExtractActionGrad(const Eigen::MatrixXd& joint_grad, int n_agents, int obs_dim) {
  if (joint_grad.rows() != JointWidth(n_agents, obs_dim)) throw ShapeError("joint gradient rows mismatch");
  const Eigen::Index b = joint_grad.cols();
  Eigen::MatrixXd out(3, n_agents * b);
  for (Eigen::Index s = 0; s < b; ++s)
    for (int i = 0; i < n_agents; ++i)
      out.col(s * n_agents + i) = joint_grad.col(s).segment(i * (obs_dim + 3) + obs_dim, 3);
  return out;
}

Eigen::MatrixXd AgentMajor(const Eigen::MatrixXd& joint, int rows_per_agent, int n_agents) {
  if (joint.rows() != rows_per_agent * n_agents) throw ShapeError("AgentMajor: row count mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(joint.data(), rows_per_agent, joint.cols() * n_agents);
}

Eigen::MatrixXd JointMajor(const Eigen::MatrixXd& agent_major, int rows_per_agent, int n_agents) {
  if (agent_major.rows() != rows_per_agent || agent_major.cols() % n_agents != 0)
    throw ShapeError("JointMajor: shape mismatch");
  return Eigen::Map<const Eigen::MatrixXd>(agent_major.data(), rows_per_agent * n_agents,
                                           agent_major.cols() / n_agents);
}

}  // namespace lepus
