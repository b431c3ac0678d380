#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lepus/error.hpp"
#include "lepus/nn.hpp"

using namespace lepus;
using nn::Activation;

namespace {

nn::Mlp Scalar(double w, double b, Activation act = Activation::kIdentity) {
  nn::Layer l{Eigen::MatrixXd::Constant(1, 1, w), Eigen::VectorXd::Constant(1, b), act};
  return nn::Mlp({l});
}

}  // namespace

TEST_CASE("zero parameters give a zero output") {
  for (auto act : {Activation::kIdentity, Activation::kTanh, Activation::kRelu}) {
    const nn::LayerSpec specs[] = {{5, Activation::kRelu}, {3, act}};
    const nn::Mlp net = nn::Mlp::Zeros(4, specs);
    CHECK(nn::MlpForward(net, Eigen::VectorXd::Random(4)).isZero(0.0));
  }
}

TEST_CASE("one-layer affine net by hand") {
  const nn::Mlp net = Scalar(2.0, 1.0);
  CHECK(nn::MlpForward(net, Eigen::VectorXd::Constant(1, 3.0))(0) == 7.0);
  const auto back = nn::MlpBackward(net, Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 1.0));
  CHECK(back.grads.weight[0](0, 0) == 3.0);
  CHECK(back.grads.bias[0](0) == 1.0);
  CHECK(back.input_grad(0, 0) == 2.0);
}

TEST_CASE("policy-shaped network output width") {
  Rng rng(7);
  const nn::LayerSpec specs[] = {{300, Activation::kRelu}, {400, Activation::kRelu}, {3, Activation::kIdentity}};
  const nn::Mlp net = nn::Mlp::Random(65, specs, rng);
  CHECK(nn::MlpForward(net, Eigen::VectorXd::Random(65)).size() == 3);
  CHECK(net.num_params() == 65 * 300 + 300 + 300 * 400 + 400 + 400 * 3 + 3);
}

TEST_CASE("shape and value errors") {
  const nn::Mlp net = Scalar(1.0, 0.0);
  CHECK_THROWS_AS(nn::Forward(net, Eigen::MatrixXd::Zero(2, 1)), ShapeError);
  const auto cache = nn::ForwardWithCache(net, Eigen::MatrixXd::Ones(1, 1));
  CHECK_THROWS_AS(nn::Backward(net, cache, Eigen::MatrixXd::Ones(2, 1)), ShapeError);
  CHECK_THROWS_AS(nn::Backward(net, cache, Eigen::MatrixXd::Constant(1, 1, NAN)), ValueError);
  nn::Layer a{Eigen::MatrixXd::Ones(3, 2), Eigen::VectorXd::Zero(3), Activation::kRelu};
  nn::Layer b{Eigen::MatrixXd::Ones(1, 4), Eigen::VectorXd::Zero(1), Activation::kIdentity};
  CHECK_THROWS_AS(nn::Mlp({a, b}), ShapeError);
  a.weight(0, 0) = INFINITY;
  CHECK_THROWS_AS(nn::Mlp({a}), ValueError);
}

TEST_CASE("zero cotangent gives zero gradients") {
  Rng rng(3);
  const nn::LayerSpec specs[] = {{6, Activation::kTanh}, {2, Activation::kSigmoid}};
  const nn::Mlp net = nn::Mlp::Random(4, specs, rng);
  const auto back = nn::MlpBackward(net, Eigen::VectorXd::Random(4), Eigen::VectorXd::Zero(2));
  CHECK(back.grads.MaxAbs() == 0.0);
  CHECK(back.input_grad.isZero(0.0));
}

TEST_CASE("backward matches central finite differences") {
  const auto stats = testing::RunGradCheck(200, 20240611);
  CHECK(stats.nets == 200);
  CHECK(stats.max_rel_error < 1e-4);
}

TEST_CASE("batched backward sums per-sample gradients") {
  Rng rng(11);
  const nn::LayerSpec specs[] = {{5, Activation::kLeakyRelu}, {2, Activation::kTanh}};
  const nn::Mlp net = nn::Mlp::Random(3, specs, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  const Eigen::MatrixXd u = Eigen::MatrixXd::Random(2, 4);
  const auto batch = nn::Backward(net, nn::ForwardWithCache(net, x), u);
  nn::ParamBuffers sum = net.ZeroBuffers();
  for (int c = 0; c < 4; ++c) sum += nn::MlpBackward(net, x.col(c), u.col(c)).grads;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    CHECK((batch.grads.weight[k] - sum.weight[k]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch.grads.bias[k] - sum.bias[k]).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Eigen::MatrixXd ig = nn::InputGradient(net, nn::ForwardWithCache(net, x), u);
  CHECK((ig - batch.input_grad).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Adam first step on a scalar parameter") {
  nn::Mlp net = Scalar(0.5, 0.0);
  nn::AdamState adam(net, {});
  nn::ParamBuffers g = net.ZeroBuffers();
  g.weight[0](0, 0) = 1.0;
  adam.Step(net, g);
  // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1.
  const double expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
  CHECK(net.layer(0).weight(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(adam.step_count() == 1);

  // Hand recurrence for further constant-gradient steps.
  double m = 0.1, v = 0.001, p = expected;
  for (int t = 2; t <= 5; ++t) {
    adam.Step(net, g);
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    p -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(net.layer(0).weight(0, 0) == doctest::Approx(p).epsilon(1e-14));
}

TEST_CASE("Adam with zero gradients leaves parameters and counts the step") {
  Rng rng(5);
  const nn::LayerSpec specs[] = {{4, Activation::kRelu}, {1, Activation::kIdentity}};
  nn::Mlp net = nn::Mlp::Random(3, specs, rng);
  const auto before = net.Flatten();
  nn::AdamState adam(net, {});
  adam.Step(net, net.ZeroBuffers());
  CHECK(net.Flatten() == before);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("Adam rejects non-finite gradients without side effects") {
  nn::Mlp net = Scalar(1.0, 2.0);
  nn::AdamState adam(net, {});
  nn::ParamBuffers g = net.ZeroBuffers();
  g.bias[0](0) = NAN;
  CHECK_THROWS_AS(adam.Step(net, g), ValueError);
  CHECK(adam.step_count() == 0);
  CHECK(net.layer(0).bias(0) == 2.0);
  CHECK(adam.first_moment().MaxAbs() == 0.0);
}

TEST_CASE("identical parameters with identical gradients update identically") {
  nn::Layer l{Eigen::MatrixXd::Constant(2, 1, 0.3), Eigen::VectorXd::Zero(2), Activation::kIdentity};
  nn::Mlp net({l});
  nn::AdamState adam(net, {});
  nn::ParamBuffers g = net.ZeroBuffers();
  g.weight[0].setConstant(0.7);
  for (int i = 0; i < 3; ++i) adam.Step(net, g);
  CHECK(net.layer(0).weight(0, 0) == net.layer(0).weight(1, 0));
}

TEST_CASE("soft update") {
  nn::Mlp target = Scalar(0.0, 0.0);
  const nn::Mlp source = Scalar(10.0, -4.0);
  nn::SoftUpdate(target, source, 1e-3);
  CHECK(target.layer(0).weight(0, 0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(target.layer(0).bias(0) == doctest::Approx(-0.004).epsilon(1e-12));

  nn::Mlp copy = Scalar(3.0, 1.0);
  nn::SoftUpdate(copy, source, 1.0);
  CHECK(copy.Flatten() == source.Flatten());

  nn::Mlp same = source;
  nn::SoftUpdate(same, source, 0.3);
  CHECK(same.Flatten() == source.Flatten());

  CHECK_THROWS_AS(nn::SoftUpdate(same, source, 0.0), ValueError);
  CHECK_THROWS_AS(nn::SoftUpdate(same, source, 1.5), ValueError);
}

TEST_CASE("soft update is a convex combination") {
  Rng rng(9);
  const nn::LayerSpec specs[] = {{6, Activation::kTanh}, {2, Activation::kIdentity}};
  nn::Mlp a = nn::Mlp::Random(3, specs, rng);
  const nn::Mlp b = nn::Mlp::Random(3, specs, rng);
  const auto fa = a.Flatten(), fb = b.Flatten();
  nn::SoftUpdate(a, b, 0.37);
  const auto fm = a.Flatten();
  for (std::size_t i = 0; i < fm.size(); ++i) {
    CHECK(fm[i] >= std::min(fa[i], fb[i]) - 1e-15);
    CHECK(fm[i] <= std::max(fa[i], fb[i]) + 1e-15);
  }
}

TEST_CASE("seeded initialization is deterministic") {
  const nn::LayerSpec specs[] = {{7, Activation::kRelu}, {2, Activation::kIdentity}};
  Rng r1(42), r2(42), r3(43);
  const nn::Mlp a = nn::Mlp::Random(5, specs, r1);
  const nn::Mlp b = nn::Mlp::Random(5, specs, r2);
  const nn::Mlp c = nn::Mlp::Random(5, specs, r3);
  CHECK(a.Digest() == b.Digest());
  CHECK(a.Digest() != c.Digest());
  for (const auto& l : a.layers()) CHECK(l.weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(l.weight.cols()));
}

TEST_CASE("checkpoint round trip and architecture check") {
  Rng rng(1);
  const nn::LayerSpec specs[] = {{4, Activation::kLeakyRelu}, {2, Activation::kSigmoid}};
  const nn::Mlp net = nn::Mlp::Random(3, specs, rng);
  const nn::Mlp back = nn::MlpFromJson(nlohmann::json::parse(nn::ToJson(net).dump()), net);
  CHECK(back.Flatten() == net.Flatten());
  CHECK(back.layer(0).activation == Activation::kLeakyRelu);

  const nn::LayerSpec other[] = {{5, Activation::kLeakyRelu}, {2, Activation::kSigmoid}};
  const nn::Mlp wrong = nn::Mlp::Random(3, other, rng);
  CHECK_THROWS_AS(nn::MlpFromJson(nn::ToJson(net), wrong), FormatError);
  auto j = nn::ToJson(net);
  j["params"].erase(0);
  CHECK_THROWS_AS(nn::MlpFromJson(j), FormatError);

  nn::AdamState adam(net, {2e-4});
  nn::Mlp mutable_net = net;
  nn::ParamBuffers g = net.ZeroBuffers();
  g.weight[1].setConstant(0.5);
  adam.Step(mutable_net, g);
  const auto restored = nn::AdamState::FromJson(nlohmann::json::parse(adam.ToJson().dump()), net);
  CHECK(restored.step_count() == 1);
  CHECK(restored.config().learning_rate == 2e-4);
  CHECK(restored.first_moment().weight[1] == adam.first_moment().weight[1]);
}
