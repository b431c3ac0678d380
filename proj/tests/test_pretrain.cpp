#include <doctest.h>

#include <cmath>

#include "lepus/error.hpp"
#include "lepus/policy.hpp"
#include "lepus/pretrain.hpp"

using namespace lepus;
using pretrain::DiscriminatorArch;

namespace {

pretrain::Discriminator Make(int m, int d, double lr, std::uint64_t seed,
                             DiscriminatorArch arch = DiscriminatorArch::kTanh300x600) {
  return pretrain::BuildDiscriminator(m, d, arch, lr, Eigen::VectorXd::Ones(d), seed);
}

pretrain::Discriminator ZeroDis(int m, int d) {
  auto dis = Make(m, d, 1e-3, 0);
  std::vector<double> zeros(dis.net.num_params(), 0.0);
  dis.net.Assign(zeros);
  return dis;
}

expert::JointTrajectoryDataset Toy(int m, int d, int rounds, int len, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  expert::JointTrajectoryDataset ds(m, d);
  for (int r = 0; r < rounds; ++r) {
    std::vector<double> s, a;
    for (int t = 0; t < len * m; ++t) {
      for (int k = 0; k < d; ++k) s.push_back(n(rng));
      a.insert(a.end(), {0.3, 0.8, 0.0});
    }
    ds.AddRound(s, a);
  }
  return ds;
}

}  // namespace

TEST_CASE("zero-parameter discriminator scores one half") {
  const auto dis = ZeroDis(2, 3);
  const Eigen::VectorXd s = pretrain::DiscriminatorScore(dis, Eigen::MatrixXd::Random(6, 4), Eigen::MatrixXd::Random(6, 4));
  for (double x : s) CHECK(x == 0.5);
}

TEST_CASE("scores are deterministic and strictly inside the unit interval") {
  const auto dis = Make(2, 3, 1e-4, 5);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Random(6, 1000) * 50.0;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(6, 1000) * 50.0;
  const Eigen::VectorXd x = pretrain::DiscriminatorScore(dis, s, a);
  CHECK(x.minCoeff() > 0.0);
  CHECK(x.maxCoeff() < 1.0);
  CHECK(x == pretrain::DiscriminatorScore(dis, s, a));
  CHECK_THROWS_AS(pretrain::DiscriminatorScore(dis, Eigen::MatrixXd::Zero(5, 1), Eigen::MatrixXd::Zero(6, 1)),
                  ShapeError);
}

TEST_CASE("objective fixtures") {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(7);
  CHECK(pretrain::AdversarialObjective(zero, zero) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-14));
  const double sep = pretrain::AdversarialObjective(Eigen::VectorXd::Constant(3, 40.0), Eigen::VectorXd::Constant(3, -40.0));
  CHECK(sep < 0.0);
  CHECK(sep > -1e-15);
  const double big = pretrain::AdversarialObjective(Eigen::VectorXd::Constant(3, 1e6), Eigen::VectorXd::Constant(3, -1e6));
  CHECK(std::isfinite(big));
}

TEST_CASE("swapping roles equals the complement-score objective") {
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  Eigen::VectorXd ze(5), zp(8);
  for (auto& z : ze) z = n(rng);
  for (auto& z : zp) z = n(rng);
  const double swapped = pretrain::AdversarialObjective(zp, ze);
  const double complement = pretrain::AdversarialObjective(-ze, -zp);
  CHECK(swapped == doctest::Approx(complement).epsilon(1e-14));
  double direct = 0.0;
  for (double z : zp) direct += std::log(1.0 / (1.0 + std::exp(-z))) / 8.0;
  for (double z : ze) direct += std::log(1.0 - 1.0 / (1.0 + std::exp(-z))) / 5.0;
  CHECK(swapped == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("discriminator update returns the pre-step objective") {
  auto dis = Make(1, 2, 1e-3, 1);
  const Eigen::MatrixXd se = Eigen::MatrixXd::Random(2, 16), ae = Eigen::MatrixXd::Random(3, 16);
  const Eigen::MatrixXd sp = Eigen::MatrixXd::Random(2, 16), ap = Eigen::MatrixXd::Random(3, 16);
  const double expected = pretrain::AdversarialObjective(pretrain::DiscriminatorLogits(dis, se, ae),
                                                         pretrain::DiscriminatorLogits(dis, sp, ap));
  const auto before = dis.net.Digest();
  CHECK(pretrain::DiscriminatorUpdate(dis, se, ae, sp, ap) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(dis.net.Digest() != before);
  CHECK(dis.adam.step_count() == 1);
}

TEST_CASE("discriminator separates two clusters") {
  auto dis = Make(1, 2, 1e-3, 2);
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 0.3);
  auto cluster = [&](double c, int count) {
    Eigen::MatrixXd s(2, count), a(3, count);
    for (int i = 0; i < count; ++i) {
      s.col(i) << c + n(rng), c + n(rng);
      a.col(i) << 0.5 * c + 0.1 * n(rng), 0.5, 0.0;
    }
    return std::pair{s, a};
  };
  for (int it = 0; it < 500; ++it) {
    const auto [se, ae] = cluster(1.0, 32);
    const auto [sp, ap] = cluster(-1.0, 32);
    pretrain::DiscriminatorUpdate(dis, se, ae, sp, ap);
  }
  const auto [te, tae] = cluster(1.0, 500);
  const auto [tp, tap] = cluster(-1.0, 500);
  const Eigen::VectorXd pe = pretrain::DiscriminatorScore(dis, te, tae);
  const Eigen::VectorXd pp = pretrain::DiscriminatorScore(dis, tp, tap);
  const double correct = (pe.array() > 0.5).count() + (pp.array() < 0.5).count();
  CHECK(correct / 1000.0 > 0.95);
}

TEST_CASE("constant discriminator leaves the policy unchanged") {
  const auto dis = ZeroDis(2, 3);
  Rng rng(4);
  nn::Mlp policy = policy::BuildPolicy(3, rng);
  nn::AdamState adam(policy, {1e-3});
  const auto before = policy.Flatten();
  const double loss = pretrain::PolicyPretrainUpdate(policy, adam, dis, Eigen::MatrixXd::Random(6, 8));
  CHECK(loss == -0.5);
  CHECK(policy.Flatten() == before);
}

TEST_CASE("policy loss is the negated pre-step mean score and never moves the discriminator") {
  const auto dis = Make(2, 3, 1e-4, 6);
  Rng rng(5);
  nn::Mlp policy = policy::BuildPolicy(3, rng);
  nn::AdamState adam(policy, {1e-3});
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(6, 32);
  const double score = pretrain::MeanPolicyScore(dis, policy, states);
  const auto dis_digest = dis.net.Digest();
  const double loss = pretrain::PolicyPretrainUpdate(policy, adam, dis, states);
  CHECK(loss == doctest::Approx(-score).epsilon(1e-14));
  CHECK(dis.net.Digest() == dis_digest);
  CHECK_THROWS_AS(pretrain::PolicyPretrainUpdate(policy, adam, dis, Eigen::MatrixXd(6, 0)), ValueError);
}

TEST_CASE("small steps against a fixed discriminator raise the score monotonically") {
  const auto dis = Make(2, 3, 1e-4, 7);
  Rng rng(9);
  nn::Mlp policy = policy::BuildPolicy(3, rng);
  nn::AdamState adam(policy, {1e-5});
  const Eigen::MatrixXd states = Eigen::MatrixXd::Random(6, 64);
  double prev = -pretrain::PolicyPretrainUpdate(policy, adam, dis, states);
  for (int it = 1; it < 100; ++it) {
    const double score = -pretrain::PolicyPretrainUpdate(policy, adam, dis, states);
    CHECK(score > prev);
    prev = score;
  }
}

TEST_CASE("zero iterations leave both networks unchanged") {
  const auto ds = Toy(2, 3, 2, 10, 1);
  Rng rng(1);
  const nn::Mlp policy = policy::BuildPolicy(3, rng);
  const auto dis = Make(2, 3, 1e-4, 2);
  pretrain::PretrainConfig cfg;
  cfg.dis_iter = 0;
  const auto r = pretrain::AdversarialPretrain(policy, dis, ds, cfg, 3);
  CHECK(r.policy.Digest() == policy.Digest());
  CHECK(r.dis.net.Digest() == dis.net.Digest());
  CHECK(r.curves.dis_objective.empty());
  CHECK_THROWS_AS(pretrain::AdversarialPretrain(policy, dis, expert::JointTrajectoryDataset(2, 3), cfg, 3),
                  ValueError);
}

TEST_CASE("pre-training raises the policy score and is deterministic") {
  const auto ds = Toy(2, 3, 4, 50, 2);
  Rng rng(1);
  const nn::Mlp policy = policy::BuildPolicy(3, rng);
  const auto dis = Make(2, 3, 1e-4, 2);
  pretrain::PretrainConfig cfg;
  cfg.dis_iter = 1000;
  cfg.batch = 64;
  cfg.dis_learning_rate = 1e-4;
  cfg.policy_learning_rate = 1e-5;
  cfg.expert_fraction = 1.0;
  const auto a = pretrain::AdversarialPretrain(policy, dis, ds, cfg, 4);
  const auto b = pretrain::AdversarialPretrain(policy, dis, ds, cfg, 4);
  CHECK(a.curves.dis_objective.size() == 1000);
  CHECK(a.policy.Digest() == b.policy.Digest());
  CHECK(a.dis.net.Digest() == b.dis.net.Digest());

  std::vector<std::size_t> idx(ds.num_records());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Eigen::MatrixXd states = ds.GatherStates(idx);
  CHECK(pretrain::MeanPolicyScore(a.dis, a.policy, states) > pretrain::MeanPolicyScore(a.dis, policy, states));

  // Actions move toward the constant expert action.
  const Eigen::Vector3d target(0.3, 0.8, 0.0);
  auto gap = [&](const nn::Mlp& p) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < states.cols(); ++c) {
      const Eigen::MatrixXd joint = states.col(c).reshaped(3, 2);
      const Eigen::MatrixXd act = policy::Act(p, joint, Eigen::VectorXd::Ones(3));
      total += (act.colwise() - target).colwise().norm().sum();
    }
    return total;
  };
  CHECK(gap(a.policy) < gap(policy));
}

TEST_CASE("architecture names and checkpoints") {
  CHECK(pretrain::ArchFromName("A") == DiscriminatorArch::kTanh300x600);
  CHECK(pretrain::ArchFromName("B") == DiscriminatorArch::kLeaky128x64x32);
  CHECK(pretrain::ArchFromName(pretrain::ArchName(DiscriminatorArch::kLeaky128x64x32)) ==
        DiscriminatorArch::kLeaky128x64x32);
  CHECK_THROWS_AS(pretrain::ArchFromName("C"), ConfigError);
  const auto b = Make(3, 65, 1e-4, 1, DiscriminatorArch::kLeaky128x64x32);
  CHECK(b.net.num_layers() == 4);
  CHECK(b.net.input_dim() == 204);
  const auto a = Make(3, 65, 1e-4, 1);
  CHECK(a.net.layer(0).weight.rows() == 300);
  CHECK(a.net.layer(1).weight.rows() == 600);
  const auto back = pretrain::Discriminator::FromJson(nlohmann::json::parse(a.ToJson().dump()));
  CHECK(back.net.Digest() == a.net.Digest());
  CHECK(back.arch == a.arch);
}
