#include "lepus/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lepus/error.hpp"
#include "lepus/joint.hpp"
#include "lepus/policy.hpp"

namespace lepus::pretrain {
namespace {

// log(1 + exp(x)) without overflow.
double Softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void CheckDims(const Discriminator& dis, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  if (states.rows() != dis.n_agents * dis.obs_dim || actions.rows() != dis.n_agents * 3 ||
      states.cols() != actions.cols())
    throw ShapeError("discriminator input must be (M*D) x B states and (M*3) x B actions with M=" +
                     std::to_string(dis.n_agents) + ", D=" + std::to_string(dis.obs_dim));
}

Eigen::MatrixXd Encode(const Discriminator& dis, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
  CheckDims(dis, states, actions);
  return EncodeJoint(states, actions, dis.n_agents, dis.scale);
}

// Upstream for a clamped logit: zero where the clamp is active.
double ClampMask(double z) { return std::abs(z) > kLogitClamp ? 0.0 : 1.0; }

struct PolicyJointPass {
  policy::PolicyPass pass;
  Eigen::MatrixXd joint_actions;  // (M*3) x B
};

PolicyJointPass RunPolicyJoint(const nn::Mlp& policy, const Discriminator& dis, const Eigen::MatrixXd& joint_states) {
  if (joint_states.rows() != dis.n_agents * dis.obs_dim) throw ShapeError("policy states must be (M*D) x B");
  PolicyJointPass out;
  out.pass = policy::RunSharedPolicy(policy, AgentMajor(joint_states, dis.obs_dim, dis.n_agents), dis.scale);
  out.joint_actions = JointMajor(out.pass.actions, 3, dis.n_agents);
  return out;
}

double PolicyStep(nn::Mlp& policy, nn::AdamState& adam, const Discriminator& dis, const Eigen::MatrixXd& joint_states,
                  const PolicyJointPass& pj) {
  const Eigen::MatrixXd x = Encode(dis, joint_states, pj.joint_actions);
  const nn::ForwardCache cache = nn::ForwardWithCache(dis.net, x);
  const auto b = static_cast<double>(x.cols());
  Eigen::MatrixXd upstream(1, x.cols());
  double score_sum = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double z = cache.output()(0, c);
    const double s = Sigmoid(std::clamp(z, -kLogitClamp, kLogitClamp));
    score_sum += s;
    upstream(0, c) = -s * (1.0 - s) * ClampMask(z) / b;
  }
  const Eigen::MatrixXd action_grad =
      ExtractActionGrad(nn::InputGradient(dis.net, cache, upstream), dis.n_agents, dis.obs_dim);
  adam.Step(policy, policy::SharedPolicyGrad(policy, pj.pass, action_grad));
  return -score_sum / b;
}

}  // namespace

std::string ArchName(DiscriminatorArch arch) {
  return arch == DiscriminatorArch::kTanh300x600 ? "tanh300x600" : "leaky128x64x32";
}

DiscriminatorArch ArchFromName(const std::string& name) {
  if (name == "tanh300x600" || name == "A") return DiscriminatorArch::kTanh300x600;
  if (name == "leaky128x64x32" || name == "B") return DiscriminatorArch::kLeaky128x64x32;
  throw ConfigError("unknown discriminator architecture '" + name + "'");
}

Discriminator BuildDiscriminator(int n_agents, int obs_dim, DiscriminatorArch arch, double learning_rate,
                                 const Eigen::VectorXd& scale, std::uint64_t seed) {
  if (n_agents < 1 || obs_dim < 1) throw ValueError("discriminator needs M >= 1 and D >= 1");
  if (scale.size() != 0 && scale.size() != obs_dim) throw ShapeError("feature scale length mismatch");
  Rng rng(seed);
  Discriminator dis;
  dis.arch = arch;
  dis.n_agents = n_agents;
  dis.obs_dim = obs_dim;
  dis.scale = scale.size() == 0 ? Eigen::VectorXd::Ones(obs_dim) : scale;
  const int width = JointWidth(n_agents, obs_dim);
  if (arch == DiscriminatorArch::kTanh300x600) {
    const nn::LayerSpec specs[] = {
        {300, nn::Activation::kTanh}, {600, nn::Activation::kTanh}, {1, nn::Activation::kIdentity}};
    dis.net = nn::Mlp::Random(width, specs, rng);
  } else {
    const nn::LayerSpec specs[] = {{128, nn::Activation::kLeakyRelu},
                                   {64, nn::Activation::kLeakyRelu},
                                   {32, nn::Activation::kLeakyRelu},
                                   {1, nn::Activation::kIdentity}};
    dis.net = nn::Mlp::Random(width, specs, rng);
  }
  dis.adam = nn::AdamState(dis.net, {learning_rate});
  return dis;
}

nlohmann::json Discriminator::ToJson() const {
  return {{"format", "lepus.discriminator"},
          {"version", 1},
          {"arch", ArchName(arch)},
          {"n_agents", n_agents},
          {"obs_dim", obs_dim},
          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())},
          {"net", nn::ToJson(net)},
          {"adam", adam.ToJson()}};
}

Discriminator Discriminator::FromJson(const nlohmann::json& j) {
  try {
    if (j.at("format") != "lepus.discriminator" || j.at("version") != 1)
      throw FormatError("not a discriminator checkpoint");
    Discriminator dis;
    dis.arch = ArchFromName(j.at("arch").get<std::string>());
    dis.n_agents = j.at("n_agents").get<int>();
    dis.obs_dim = j.at("obs_dim").get<int>();
    auto scale = j.at("scale").get<std::vector<double>>();
    if (static_cast<int>(scale.size()) != dis.obs_dim) throw FormatError("discriminator scale length mismatch");
    dis.scale = Eigen::Map<Eigen::VectorXd>(scale.data(), dis.obs_dim);
    dis.net = nn::MlpFromJson(j.at("net"));
    if (dis.net.input_dim() != JointWidth(dis.n_agents, dis.obs_dim) || dis.net.output_dim() != 1)
      throw FormatError("discriminator network shape does not match M and D");
    dis.adam = nn::AdamState::FromJson(j.at("adam"), dis.net);
    return dis;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed discriminator checkpoint: ") + e.what());
  }
}

Eigen::VectorXd DiscriminatorLogits(const Discriminator& dis, const Eigen::MatrixXd& joint_states,
                                    const Eigen::MatrixXd& joint_actions) {
  const Eigen::MatrixXd z = nn::Forward(dis.net, Encode(dis, joint_states, joint_actions));
  return z.row(0).transpose().cwiseMax(-kLogitClamp).cwiseMin(kLogitClamp);
}

Eigen::VectorXd DiscriminatorScore(const Discriminator& dis, const Eigen::MatrixXd& joint_states,
                                   const Eigen::MatrixXd& joint_actions) {
  return DiscriminatorLogits(dis, joint_states, joint_actions).unaryExpr([](double z) { return Sigmoid(z); });
}

double AdversarialObjective(const Eigen::VectorXd& expert_logits, const Eigen::VectorXd& policy_logits) {
  if (expert_logits.size() == 0 || policy_logits.size() == 0) throw ValueError("empty discriminator batch");
  double e = 0.0, p = 0.0;
  for (double z : expert_logits) e -= Softplus(-z);
  for (double z : policy_logits) p -= Softplus(z);
  return e / static_cast<double>(expert_logits.size()) + p / static_cast<double>(policy_logits.size());
}

double DiscriminatorUpdate(Discriminator& dis, const Eigen::MatrixXd& expert_states,
                           const Eigen::MatrixXd& expert_actions, const Eigen::MatrixXd& policy_states,
                           const Eigen::MatrixXd& policy_actions) {
  if (expert_states.cols() == 0 || policy_states.cols() == 0) throw ValueError("empty discriminator batch");
  const Eigen::Index ne = expert_states.cols();
  const Eigen::Index np = policy_states.cols();
  Eigen::MatrixXd x(JointWidth(dis.n_agents, dis.obs_dim), ne + np);
  x.leftCols(ne) = Encode(dis, expert_states, expert_actions);
  x.rightCols(np) = Encode(dis, policy_states, policy_actions);
  const nn::ForwardCache cache = nn::ForwardWithCache(dis.net, x);

  Eigen::VectorXd ze(ne), zp(np);
  Eigen::MatrixXd upstream(1, ne + np);
  // Descent on the negated objective.
  for (Eigen::Index c = 0; c < ne; ++c) {
    const double z = cache.output()(0, c);
    ze(c) = std::clamp(z, -kLogitClamp, kLogitClamp);
    upstream(0, c) = -(1.0 - Sigmoid(ze(c))) * ClampMask(z) / static_cast<double>(ne);
  }
  for (Eigen::Index c = 0; c < np; ++c) {
    const double z = cache.output()(0, ne + c);
    zp(c) = std::clamp(z, -kLogitClamp, kLogitClamp);
    upstream(0, ne + c) = Sigmoid(zp(c)) * ClampMask(z) / static_cast<double>(np);
  }
  const double objective = AdversarialObjective(ze, zp);
  dis.adam.Step(dis.net, nn::Backward(dis.net, cache, upstream, false).grads);
  return objective;
}

double PolicyPretrainUpdate(nn::Mlp& policy, nn::AdamState& policy_adam, const Discriminator& dis,
                            const Eigen::MatrixXd& joint_states) {
  if (joint_states.cols() == 0) throw ValueError("empty policy batch");
  if (policy.input_dim() != dis.obs_dim || policy.output_dim() != 3)
    throw ShapeError("policy must map D=" + std::to_string(dis.obs_dim) + " observations to 3 actions");
  return PolicyStep(policy, policy_adam, dis, joint_states, RunPolicyJoint(policy, dis, joint_states));
}

double MeanPolicyScore(const Discriminator& dis, const nn::Mlp& policy, const Eigen::MatrixXd& joint_states) {
  const PolicyJointPass pj = RunPolicyJoint(policy, dis, joint_states);
  return DiscriminatorScore(dis, joint_states, pj.joint_actions).mean();
}

PretrainResult AdversarialPretrain(nn::Mlp policy, Discriminator dis, const expert::JointTrajectoryDataset& dataset,
                                   const PretrainConfig& config, std::uint64_t seed) {
  if (dataset.empty()) throw ValueError("adversarial pre-training needs a non-empty expert dataset");
  if (dataset.n_agents() != dis.n_agents || dataset.obs_dim() != dis.obs_dim)
    throw ShapeError("dataset dimensions do not match the discriminator");
  if (policy.input_dim() != dis.obs_dim || policy.output_dim() != 3)
    throw ShapeError("policy does not match the discriminator's observation size");
  if (config.dis_iter < 0 || config.batch < 1) throw ValueError("invalid pre-training schedule");
  if (!(config.expert_fraction > 0.0 && config.expert_fraction <= 1.0))
    throw ValueError("expert_fraction must lie in (0, 1]");

  PretrainResult result;
  result.policy_adam = nn::AdamState(policy, {config.policy_learning_rate});
  if (config.dis_iter > 0) {
    const expert::JointTrajectoryDataset subset = dataset.LeadingFraction(config.expert_fraction);
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, subset.num_records() - 1);
    std::vector<std::size_t> expert_idx(static_cast<std::size_t>(config.batch));
    std::vector<std::size_t> policy_idx(static_cast<std::size_t>(config.batch));
    for (int it = 0; it < config.dis_iter; ++it) {
      for (auto& i : expert_idx) i = pick(rng);
      for (auto& i : policy_idx) i = pick(rng);
      const Eigen::MatrixXd se = subset.GatherStates(expert_idx);
      const Eigen::MatrixXd ae = subset.GatherActions(expert_idx);
      const Eigen::MatrixXd sp = subset.GatherStates(policy_idx);
      // The policy is unchanged between the two steps, so one pass serves both.
      const PolicyJointPass pj = RunPolicyJoint(policy, dis, sp);
      result.curves.dis_objective.push_back(DiscriminatorUpdate(dis, se, ae, sp, pj.joint_actions));
      const double loss = PolicyStep(policy, result.policy_adam, dis, sp, pj);
      result.curves.policy_loss.push_back(loss);
      result.curves.policy_score.push_back(-loss);
    }
  }
  result.policy = std::move(policy);
  result.dis = std::move(dis);
  return result;
}

}  // namespace lepus::pretrain
