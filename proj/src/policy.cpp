#include "lepus/policy.hpp"

#include "lepus/error.hpp"
#include "lepus/joint.hpp"

namespace lepus::policy {

nn::Mlp BuildPolicy(int obs_dim, Rng& rng) {
  const nn::LayerSpec specs[] = {
      {300, nn::Activation::kRelu}, {400, nn::Activation::kRelu}, {3, nn::Activation::kIdentity}};
  return nn::Mlp::Random(obs_dim, specs, rng);
}

nn::Mlp BuildCritic(int n_agents, int obs_dim, Rng& rng) {
  const nn::LayerSpec specs[] = {
      {300, nn::Activation::kRelu}, {600, nn::Activation::kRelu}, {1, nn::Activation::kIdentity}};
  return nn::Mlp::Random(JointWidth(n_agents, obs_dim), specs, rng);
}

Eigen::MatrixXd Squash(const Eigen::MatrixXd& pre) {
  if (pre.rows() != 3) throw ShapeError("policy output must have 3 rows");
  Eigen::MatrixXd out(3, pre.cols());
  out.row(0) = pre.row(0).array().tanh();
  out.bottomRows(2) = (1.0 + (-pre.bottomRows(2).array()).exp()).inverse();
  return out;
}

Eigen::MatrixXd SquashDerivative(const Eigen::MatrixXd& pre) {
  const Eigen::MatrixXd s = Squash(pre);
  Eigen::MatrixXd d(3, pre.cols());
  d.row(0) = 1.0 - s.row(0).array().square();
  d.bottomRows(2) = s.bottomRows(2).array() * (1.0 - s.bottomRows(2).array());
  return d;
}

void ClampActions(Eigen::MatrixXd& actions) {
  if (actions.rows() != 3) throw ShapeError("actions must have 3 rows");
  actions.row(0) = actions.row(0).cwiseMax(-1.0).cwiseMin(1.0);
  actions.bottomRows(2) = actions.bottomRows(2).cwiseMax(0.0).cwiseMin(1.0);
}

PolicyPass RunSharedPolicy(const nn::Mlp& policy, const Eigen::MatrixXd& agent_states, const Eigen::VectorXd& scale) {
  if (agent_states.rows() != policy.input_dim())
    throw ShapeError("policy expects " + std::to_string(policy.input_dim()) + "-dim observations, got " +
                     std::to_string(agent_states.rows()));
  PolicyPass pass;
  if (scale.size() == 0) {
    pass.cache = nn::ForwardWithCache(policy, agent_states);
  } else {
    if (scale.size() != agent_states.rows()) throw ShapeError("feature scale length mismatch");
    pass.cache = nn::ForwardWithCache(policy, scale.asDiagonal() * agent_states);
  }
  pass.actions = Squash(pass.cache.output());
  return pass;
}

nn::ParamBuffers SharedPolicyGrad(const nn::Mlp& policy, const PolicyPass& pass, const Eigen::MatrixXd& action_grad) {
  if (action_grad.rows() != 3 || action_grad.cols() != pass.actions.cols())
    throw ShapeError("action gradient must match the policy pass (3 x N)");
  const Eigen::MatrixXd upstream = action_grad.cwiseProduct(SquashDerivative(pass.cache.output()));
  return nn::Backward(policy, pass.cache, upstream, false).grads;
}

Eigen::MatrixXd Act(const nn::Mlp& policy, const Eigen::MatrixXd& joint_state, const Eigen::VectorXd& scale) {
  if (joint_state.rows() != policy.input_dim()) throw ShapeError("joint state rows must equal the policy input");
  Eigen::MatrixXd x = scale.size() == 0 ? joint_state : Eigen::MatrixXd(scale.asDiagonal() * joint_state);
  return Squash(nn::Forward(policy, x));
}

}  // namespace lepus::policy
