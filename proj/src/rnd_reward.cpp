#include "lepus/rnd_reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lepus/error.hpp"
#include "lepus/joint.hpp"
#include "lepus/random.hpp"

namespace lepus::rnd {
namespace {

constexpr int kHidden = 128;

void CheckDataset(const RndModel& model, const expert::JointTrajectoryDataset& dataset) {
  if (dataset.n_agents() != model.n_agents() || dataset.obs_dim() != model.obs_dim())
    throw ShapeError("dataset dimensions (M=" + std::to_string(dataset.n_agents()) +
                     ", D=" + std::to_string(dataset.obs_dim()) + ") do not match the reward model");
}

// Encoded pairs in chunks so large datasets do not need one huge matrix.
template <typename Fn>
void ForEachChunk(const expert::JointTrajectoryDataset& dataset, Fn&& fn) {
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < dataset.num_records(); begin += kChunk) {
    const std::size_t end = std::min(dataset.num_records(), begin + kChunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    fn(dataset.GatherStates(idx), dataset.GatherActions(idx));
  }
}

}  // namespace

RndModel::RndModel(int n_agents, int obs_dim, double sharpness, nn::Mlp random_net, nn::Mlp distill_net)
    : n_agents_(n_agents), obs_dim_(obs_dim), random_net_(std::move(random_net)), distill_net_(std::move(distill_net)) {
  set_sharpness(sharpness);
  const int width = JointWidth(n_agents, obs_dim);
  if (random_net_.input_dim() != width || distill_net_.input_dim() != width)
    throw ShapeError("reward networks must take the joint width " + std::to_string(width));
  if (random_net_.output_dim() != 1 || distill_net_.output_dim() != 1)
    throw ShapeError("reward networks must have scalar outputs");
  mean_ = Eigen::VectorXd::Zero(width);
  stddev_ = Eigen::VectorXd::Ones(width);
}

void RndModel::set_sharpness(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ValueError("RND sharpness v must be positive");
  sharpness_ = v;
}

void RndModel::SetNormalization(Eigen::VectorXd mean, Eigen::VectorXd stddev) {
  if (mean.size() != input_dim() || stddev.size() != input_dim()) throw ShapeError("normalization length mismatch");
  if (!mean.allFinite() || !stddev.allFinite() || (stddev.array() <= 0.0).any())
    throw ValueError("normalization stats must be finite with positive std");
  mean_ = std::move(mean);
  stddev_ = std::move(stddev);
}

Eigen::MatrixXd RndModel::Normalize(const Eigen::MatrixXd& joint_states, const Eigen::MatrixXd& joint_actions) const {
  if (joint_states.rows() != n_agents_ * obs_dim_)
    throw ShapeError("joint state rows " + std::to_string(joint_states.rows()) + " != M*D " +
                     std::to_string(n_agents_ * obs_dim_));
  Eigen::MatrixXd x = EncodeJoint(joint_states, joint_actions, n_agents_);
  x.colwise() -= mean_;
  x = stddev_.cwiseInverse().asDiagonal() * x;
  return x;
}

Eigen::VectorXd RndModel::Disagreement(const Eigen::MatrixXd& joint_states, const Eigen::MatrixXd& joint_actions) const {
  const Eigen::MatrixXd x = Normalize(joint_states, joint_actions);
  return (nn::Forward(distill_net_, x) - nn::Forward(random_net_, x)).transpose();
}

nlohmann::json RndModel::ToJson() const {
  return {{"format", "lepus.rnd"},
          {"version", 1},
          {"n_agents", n_agents_},
          {"obs_dim", obs_dim_},
          {"sharpness", sharpness_},
          {"mean", std::vector<double>(mean_.data(), mean_.data() + mean_.size())},
          {"stddev", std::vector<double>(stddev_.data(), stddev_.data() + stddev_.size())},
          {"random_net", nn::ToJson(random_net_)},
          {"distill_net", nn::ToJson(distill_net_)}};
}

RndModel RndModel::FromJson(const nlohmann::json& j) {
  try {
    if (j.at("format") != "lepus.rnd" || j.at("version") != 1) throw FormatError("not an RND checkpoint");
    RndModel model(j.at("n_agents").get<int>(), j.at("obs_dim").get<int>(), j.at("sharpness").get<double>(),
                   nn::MlpFromJson(j.at("random_net")), nn::MlpFromJson(j.at("distill_net")));
    auto mean = j.at("mean").get<std::vector<double>>();
    auto sd = j.at("stddev").get<std::vector<double>>();
    model.SetNormalization(Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                           Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size())));
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed RND checkpoint: ") + e.what());
  }
}

RndModel BuildRnd(int n_agents, int obs_dim, double sharpness, std::uint64_t seed) {
  if (n_agents < 1 || obs_dim < 1) throw ValueError("BuildRnd needs M >= 1 and D >= 1");
  const int width = JointWidth(n_agents, obs_dim);
  Rng rng(seed);
  const nn::LayerSpec random_specs[] = {{kHidden, nn::Activation::kLeakyRelu}, {1, nn::Activation::kIdentity}};
  const nn::LayerSpec distill_specs[] = {{kHidden, nn::Activation::kLeakyRelu},
                                         {kHidden, nn::Activation::kLeakyRelu},
                                         {kHidden, nn::Activation::kLeakyRelu},
                                         {kHidden, nn::Activation::kLeakyRelu},
                                         {1, nn::Activation::kIdentity}};
  nn::Mlp random_net = nn::Mlp::Random(width, random_specs, rng);
  nn::Mlp distill_net = nn::Mlp::Random(width, distill_specs, rng);
  return RndModel(n_agents, obs_dim, sharpness, std::move(random_net), std::move(distill_net));
}

void FitNormalization(RndModel& model, const expert::JointTrajectoryDataset& dataset) {
  CheckDataset(model, dataset);
  if (dataset.empty()) throw ValueError("cannot fit normalization on an empty dataset");
  const int width = model.input_dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(width);
  ForEachChunk(dataset, [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    const Eigen::MatrixXd x = EncodeJoint(s, a, model.n_agents());
    sum += x.rowwise().sum();
    sum_sq += x.array().square().matrix().rowwise().sum();
  });
  const auto n = static_cast<double>(dataset.num_records());
  Eigen::VectorXd mean = sum / n;
  Eigen::VectorXd var = (sum_sq / n - mean.array().square().matrix()).cwiseMax(0.0);
  Eigen::VectorXd sd = var.cwiseSqrt();
  for (Eigen::Index k = 0; k < sd.size(); ++k)
    if (sd(k) < 1e-6) sd(k) = 1.0;
  model.SetNormalization(std::move(mean), std::move(sd));
}

std::vector<double> TrainDistillation(RndModel& model, const expert::JointTrajectoryDataset& dataset,
                                      const DistillConfig& config, std::uint64_t seed) {
  CheckDataset(model, dataset);
  if (dataset.empty()) throw ValueError("cannot train the distillation network on an empty dataset");
  if (config.iters < 0 || config.minibatch < 1) throw ValueError("invalid distillation schedule");
  std::vector<double> losses;
  if (config.iters == 0) return losses;

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.num_records() - 1);
  nn::AdamState adam(model.distill_net(), {config.learning_rate});
  std::vector<std::size_t> idx(static_cast<std::size_t>(config.minibatch));
  for (int it = 0; it < config.iters; ++it) {
    for (auto& i : idx) i = pick(rng);
    const Eigen::MatrixXd x = model.Normalize(dataset.GatherStates(idx), dataset.GatherActions(idx));
    const Eigen::MatrixXd target = nn::Forward(model.random_net(), x);
    const nn::ForwardCache cache = nn::ForwardWithCache(model.distill_net(), x);
    const Eigen::MatrixXd diff = cache.output() - target;
    const double n = static_cast<double>(idx.size());
    losses.push_back(diff.squaredNorm() / n);
    const Eigen::MatrixXd upstream = (2.0 / n) * diff;
    auto back = nn::Backward(model.distill_net(), cache, upstream, false);
    adam.Step(model.mutable_distill_net(), back.grads);
  }
  return losses;
}

double RewardFromDisagreement(double sharpness, double disagreement) {
  return std::exp(-sharpness * disagreement * disagreement);
}

double RdJointReward(const RndModel& model, const Eigen::MatrixXd& state, const Eigen::MatrixXd& action) {
  if (state.rows() != model.obs_dim() || state.cols() != model.n_agents() || action.rows() != 3 ||
      action.cols() != model.n_agents())
    throw ShapeError("RdJointReward expects a D x M state and a 3 x M action");
  Eigen::Map<const Eigen::VectorXd> s(state.data(), state.size());
  Eigen::Map<const Eigen::VectorXd> a(action.data(), action.size());
  return RdJointRewardBatch(model, Eigen::MatrixXd(s), Eigen::MatrixXd(a))(0);
}

Eigen::VectorXd RdJointRewardBatch(const RndModel& model, const Eigen::MatrixXd& joint_states,
                                   const Eigen::MatrixXd& joint_actions) {
  const Eigen::VectorXd d = model.Disagreement(joint_states, joint_actions);
  return d.unaryExpr([&](double x) { return RewardFromDisagreement(model.sharpness(), x); });
}

double CombinedReward(double g_reward, double rd) {
  if (!(rd > 0.0 && rd <= 1.0) && rd != 0.0) throw ValueError("RD reward must lie in (0, 1]");
  return g_reward * rd;
}

double CalibrateSharpness(RndModel& model, const expert::JointTrajectoryDataset& dataset, double target) {
  CheckDataset(model, dataset);
  if (dataset.empty()) throw ValueError("cannot calibrate on an empty dataset");
  if (!(target > 0.0 && target < 1.0)) throw ValueError("calibration target must lie in (0, 1)");
  std::vector<double> sq;
  sq.reserve(dataset.num_records());
  ForEachChunk(dataset, [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    const Eigen::VectorXd d = model.Disagreement(s, a);
    for (Eigen::Index k = 0; k < d.size(); ++k) sq.push_back(d(k) * d(k));
  });
  auto mid = sq.begin() + static_cast<std::ptrdiff_t>(sq.size() / 2);
  std::nth_element(sq.begin(), mid, sq.end());
  const double median = std::max(*mid, 1e-300);
  model.set_sharpness(-std::log(target) / median);
  return model.sharpness();
}

double MeanReward(const RndModel& model, const expert::JointTrajectoryDataset& dataset) {
  CheckDataset(model, dataset);
  if (dataset.empty()) throw ValueError("mean reward over an empty dataset");
  double total = 0.0;
  ForEachChunk(dataset, [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    total += RdJointRewardBatch(model, s, a).sum();
  });
  return total / static_cast<double>(dataset.num_records());
}

double MeanRandomActionReward(const RndModel& model, const expert::JointTrajectoryDataset& dataset,
                              std::uint64_t seed) {
  CheckDataset(model, dataset);
  if (dataset.empty()) throw ValueError("mean reward over an empty dataset");
  Rng rng(seed);
  std::uniform_real_distribution<double> steer(-1.0, 1.0);
  std::uniform_real_distribution<double> pedal(0.0, 1.0);
  double total = 0.0;
  ForEachChunk(dataset, [&](const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
    Eigen::MatrixXd random(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < random.cols(); ++c)
      for (Eigen::Index r = 0; r < random.rows(); ++r) random(r, c) = (r % 3 == 0) ? steer(rng) : pedal(rng);
    total += RdJointRewardBatch(model, s, random).sum();
  });
  return total / static_cast<double>(dataset.num_records());
}

}  // namespace lepus::rnd
