#include "lepus/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lepus/digest.hpp"
#include "lepus/error.hpp"

namespace lepus::nn {
namespace {

std::string Dims(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void ApplyActivation(Activation activation, const Eigen::MatrixXd& pre, Eigen::MatrixXd& out) {
  switch (activation) {
    case Activation::kRelu:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::kLeakyRelu:
      out = pre.unaryExpr([](double z) { return z > 0.0 ? z : kLeakySlope * z; });
      break;
    case Activation::kTanh:
      // Via the vectorized exp; Eigen's double tanh is scalar.
      out = (1.0 - 2.0 / ((2.0 * pre.array()).exp() + 1.0)).matrix();
      break;
    case Activation::kSigmoid:
      out = (1.0 / (1.0 + (-pre.array()).exp())).matrix();
      break;
    case Activation::kIdentity:
      out = pre;
      break;
  }
}

// grad <- grad * f'(pre), using the stored output where cheaper.
void ActivationBackward(Activation activation, const Eigen::MatrixXd& pre,
                        const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (activation) {
    case Activation::kRelu:
      grad.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Activation::kLeakyRelu:
      grad.array() *= pre.unaryExpr([](double z) { return z > 0.0 ? 1.0 : kLeakySlope; }).array();
      break;
    case Activation::kTanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::kSigmoid:
      grad.array() *= out.array() * (1.0 - out.array());
      break;
    case Activation::kIdentity:
      break;
  }
}

}  // namespace

std::string_view ActivationName(Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation ActivationFromName(std::string_view name) {
  for (Activation a : {Activation::kRelu, Activation::kLeakyRelu, Activation::kTanh,
                       Activation::kSigmoid, Activation::kIdentity}) {
    if (ActivationName(a) == name) return a;
  }
  throw FormatError("unknown activation '" + std::string(name) + "'");
}

void ParamBuffers::SetZero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

bool ParamBuffers::AllFinite() const {
  for (const auto& w : weight)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

double ParamBuffers::MaxAbs() const {
  double m = 0.0;
  for (const auto& w : weight)
    if (w.size() > 0) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : bias)
    if (b.size() > 0) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

void ParamBuffers::Scale(double factor) {
  for (auto& w : weight) w *= factor;
  for (auto& b : bias) b *= factor;
}

ParamBuffers& ParamBuffers::operator+=(const ParamBuffers& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("parameter buffer layer count mismatch");
  for (std::size_t k = 0; k < weight.size(); ++k) {
    if (weight[k].rows() != other.weight[k].rows() || weight[k].cols() != other.weight[k].cols())
      throw ShapeError("parameter buffer shape mismatch at layer " + std::to_string(k));
    weight[k] += other.weight[k];
    bias[k] += other.bias[k];
  }
  return *this;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("an Mlp needs at least one layer");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    if (l.weight.rows() == 0 || l.weight.cols() == 0)
      throw ShapeError("layer " + std::to_string(k) + " has an empty weight matrix");
    if (l.bias.size() != l.weight.rows())
      throw ShapeError("layer " + std::to_string(k) + " bias length " + std::to_string(l.bias.size()) +
                       " does not match weight " + Dims(l.weight.rows(), l.weight.cols()));
    if (k > 0 && l.weight.cols() != layers_[k - 1].weight.rows())
      throw ShapeError("layer " + std::to_string(k) + " input " + std::to_string(l.weight.cols()) +
                       " does not chain with previous output " +
                       std::to_string(layers_[k - 1].weight.rows()));
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw ValueError("layer " + std::to_string(k) + " has non-finite parameters");
  }
}

Mlp Mlp::Zeros(int input_dim, std::span<const LayerSpec> specs) {
  std::vector<Layer> layers;
  int in = input_dim;
  for (const auto& spec : specs) {
    if (in <= 0 || spec.out <= 0) throw ShapeError("layer dimensions must be positive");
    layers.push_back({Eigen::MatrixXd::Zero(spec.out, in), Eigen::VectorXd::Zero(spec.out),
                      spec.activation});
    in = spec.out;
  }
  return Mlp(std::move(layers));
}

Mlp Mlp::Random(int input_dim, std::span<const LayerSpec> specs, Rng& rng) {
  Mlp net = Zeros(input_dim, specs);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
  }
  return net;
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Mlp::SameArchitecture(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& a = layers_[k];
    const auto& b = other.layers_[k];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.activation != b.activation)
      return false;
  }
  return true;
}

ParamBuffers Mlp::ZeroBuffers() const {
  ParamBuffers buf;
  for (const auto& l : layers_) {
    buf.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    buf.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return buf;
}

void Mlp::SetLayer(std::size_t k, const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias) {
  Layer& l = layers_.at(k);
  if (weight.rows() != l.weight.rows() || weight.cols() != l.weight.cols() ||
      bias.size() != l.bias.size())
    throw ShapeError("SetLayer: expected weight " + Dims(l.weight.rows(), l.weight.cols()) +
                     ", got " + Dims(weight.rows(), weight.cols()));
  if (!weight.allFinite() || !bias.allFinite()) throw ValueError("SetLayer: non-finite values");
  l.weight = weight;
  l.bias = bias;
}

void Mlp::AddScaled(const ParamBuffers& delta, double scale) {
  if (delta.weight.size() != layers_.size()) throw ShapeError("AddScaled: layer count mismatch");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].weight += scale * delta.weight[k];
    layers_[k].bias += scale * delta.bias[k];
  }
}

std::vector<double> Mlp::Flatten() const {
  std::vector<double> flat;
  flat.reserve(num_params());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weight.data(), l.weight.data() + l.weight.size());
    flat.insert(flat.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return flat;
}

void Mlp::Assign(std::span<const double> flat) {
  if (flat.size() != num_params())
    throw ShapeError("Assign: expected " + std::to_string(num_params()) + " values, got " +
                     std::to_string(flat.size()));
  for (double x : flat)
    if (!std::isfinite(x)) throw ValueError("Assign: non-finite parameter");
  std::size_t offset = 0;
  for (auto& l : layers_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), l.weight.size(), l.weight.data());
    offset += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), l.bias.size(), l.bias.data());
    offset += static_cast<std::size_t>(l.bias.size());
  }
}

std::uint64_t Mlp::Digest() const {
  Fnv1a h;
  for (const auto& l : layers_) {
    h.UpdateValue(static_cast<std::int64_t>(l.weight.rows()));
    h.UpdateValue(static_cast<std::int64_t>(l.weight.cols()));
    h.UpdateValue(static_cast<int>(l.activation));
    h.Update(l.weight.data(), sizeof(double) * static_cast<std::size_t>(l.weight.size()));
    h.Update(l.bias.data(), sizeof(double) * static_cast<std::size_t>(l.bias.size()));
  }
  return h.value();
}

ForwardCache ForwardWithCache(const Mlp& net, const Eigen::MatrixXd& input) {
  if (input.rows() != net.input_dim())
    throw ShapeError("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  ForwardCache cache;
  cache.activations.reserve(net.num_layers() + 1);
  cache.pre_activations.reserve(net.num_layers());
  cache.activations.push_back(input);
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd pre = layer.weight * cache.activations.back();
    pre.colwise() += layer.bias;
    Eigen::MatrixXd out;
    ApplyActivation(layer.activation, pre, out);
    cache.pre_activations.push_back(std::move(pre));
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

Eigen::MatrixXd Forward(const Mlp& net, const Eigen::MatrixXd& input) {
  if (input.rows() != net.input_dim())
    throw ShapeError("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  Eigen::MatrixXd x = input;
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd pre = layer.weight * x;
    pre.colwise() += layer.bias;
    ApplyActivation(layer.activation, pre, x);
  }
  return x;
}

BackwardResult Backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                        bool need_input_grad) {
  const auto& out = cache.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw ShapeError("backward: upstream gradient is " + Dims(upstream.rows(), upstream.cols()) +
                     ", output is " + Dims(out.rows(), out.cols()));
  if (!upstream.allFinite()) throw ValueError("backward: non-finite upstream gradient");

  BackwardResult result;
  result.grads = net.ZeroBuffers();
  Eigen::MatrixXd grad = upstream;
  for (std::size_t idx = net.num_layers(); idx-- > 0;) {
    const Layer& layer = net.layer(idx);
    ActivationBackward(layer.activation, cache.pre_activations[idx], cache.activations[idx + 1], grad);
    result.grads.weight[idx].noalias() = grad * cache.activations[idx].transpose();
    result.grads.bias[idx] = grad.rowwise().sum();
    if (idx > 0 || need_input_grad) {
      Eigen::MatrixXd next = layer.weight.transpose() * grad;
      grad = std::move(next);
    }
  }
  if (need_input_grad) result.input_grad = std::move(grad);
  return result;
}

Eigen::MatrixXd InputGradient(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream) {
  const auto& out = cache.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw ShapeError("backward: upstream gradient is " + Dims(upstream.rows(), upstream.cols()) +
                     ", output is " + Dims(out.rows(), out.cols()));
  if (!upstream.allFinite()) throw ValueError("backward: non-finite upstream gradient");
  Eigen::MatrixXd grad = upstream;
  for (std::size_t idx = net.num_layers(); idx-- > 0;) {
    const Layer& layer = net.layer(idx);
    ActivationBackward(layer.activation, cache.pre_activations[idx], cache.activations[idx + 1], grad);
    Eigen::MatrixXd next = layer.weight.transpose() * grad;
    grad = std::move(next);
  }
  return grad;
}

Eigen::VectorXd MlpForward(const Mlp& net, const Eigen::VectorXd& x) {
  return Forward(net, x);
}

BackwardResult MlpBackward(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) {
  ForwardCache cache = ForwardWithCache(net, x);
  return Backward(net, cache, upstream, true);
}

AdamState::AdamState(const Mlp& params, AdamConfig config)
    : config_(config), m_(params.ZeroBuffers()), v_(params.ZeroBuffers()) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0))
    throw ValueError("invalid Adam configuration");
}

void AdamState::Step(Mlp& params, const ParamBuffers& grads) {
  if (grads.weight.size() != params.num_layers() || m_.weight.size() != params.num_layers())
    throw ShapeError("Adam: gradient layer count does not match parameters");
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    const auto& w = params.layers_[k].weight;
    if (grads.weight[k].rows() != w.rows() || grads.weight[k].cols() != w.cols() ||
        grads.bias[k].size() != params.layers_[k].bias.size() || m_.weight[k].rows() != w.rows() ||
        m_.weight[k].cols() != w.cols())
      throw ShapeError("Adam: gradient shape mismatch at layer " + std::to_string(k));
  }
  if (!grads.AllFinite()) throw ValueError("Adam: non-finite gradient");

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  const double step = lr / c1;
  const double inv_c2 = 1.0 / c2;
  // Blocked so each chunk of p, m, v, g is touched once while it sits in cache.
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    constexpr Eigen::Index kBlock = 512;
    const Eigen::Index n = p.size();
    for (Eigen::Index i = 0; i < n; i += kBlock) {
      const Eigen::Index len = std::min(kBlock, n - i);
      Eigen::Map<Eigen::ArrayXd> pa(p.data() + i, len), ma(m.data() + i, len), va(v.data() + i, len);
      Eigen::Map<const Eigen::ArrayXd> ga(g.data() + i, len);
      ma = b1 * ma + (1.0 - b1) * ga;
      va = b2 * va + (1.0 - b2) * ga.square();
      pa -= step * ma / ((va * inv_c2).sqrt() + eps);
    }
  };
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    update(params.layers_[k].weight, m_.weight[k], v_.weight[k], grads.weight[k]);
    update(params.layers_[k].bias, m_.bias[k], v_.bias[k], grads.bias[k]);
  }
}

namespace {

nlohmann::json BuffersToJson(const ParamBuffers& b) {
  std::vector<double> flat;
  for (std::size_t k = 0; k < b.weight.size(); ++k) {
    flat.insert(flat.end(), b.weight[k].data(), b.weight[k].data() + b.weight[k].size());
    flat.insert(flat.end(), b.bias[k].data(), b.bias[k].data() + b.bias[k].size());
  }
  return flat;
}

ParamBuffers BuffersFromJson(const nlohmann::json& j, const Mlp& params) {
  auto flat = j.get<std::vector<double>>();
  if (flat.size() != params.num_params()) throw FormatError("optimizer moment size mismatch");
  ParamBuffers b = params.ZeroBuffers();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < b.weight.size(); ++k) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), b.weight[k].size(), b.weight[k].data());
    offset += static_cast<std::size_t>(b.weight[k].size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), b.bias[k].size(), b.bias[k].data());
    offset += static_cast<std::size_t>(b.bias[k].size());
  }
  return b;
}

}  // namespace

nlohmann::json AdamState::ToJson() const {
  return {{"learning_rate", config_.learning_rate},
          {"beta1", config_.beta1},
          {"beta2", config_.beta2},
          {"epsilon", config_.epsilon},
          {"step", step_},
          {"m", BuffersToJson(m_)},
          {"v", BuffersToJson(v_)}};
}

AdamState AdamState::FromJson(const nlohmann::json& j, const Mlp& params) {
  AdamConfig cfg{j.at("learning_rate").get<double>(), j.at("beta1").get<double>(),
                 j.at("beta2").get<double>(), j.at("epsilon").get<double>()};
  AdamState s(params, cfg);
  s.step_ = j.at("step").get<std::int64_t>();
  s.m_ = BuffersFromJson(j.at("m"), params);
  s.v_ = BuffersFromJson(j.at("v"), params);
  return s;
}

void SoftUpdate(Mlp& target, const Mlp& source, double mix) {
  if (!(mix > 0.0 && mix <= 1.0)) throw ValueError("soft update proportion must lie in (0, 1]");
  if (!target.SameArchitecture(source)) throw ShapeError("soft update between different architectures");
  for (std::size_t k = 0; k < target.num_layers(); ++k) {
    auto& t = target.layers_[k];
    const auto& s = source.layers_[k];
    if (mix == 1.0) {
      t.weight = s.weight;
      t.bias = s.bias;
    } else {
      t.weight = mix * s.weight + (1.0 - mix) * t.weight;
      t.bias = mix * s.bias + (1.0 - mix) * t.bias;
    }
  }
}

nlohmann::json ToJson(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()},
                      {"activation", std::string(ActivationName(l.activation))}});
  return {{"format", "lepus.mlp"}, {"version", 1}, {"layers", layers}, {"params", net.Flatten()}};
}

Mlp MlpFromJson(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "lepus.mlp") throw FormatError("not an mlp record");
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported mlp record version");
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw FormatError("mlp record has no layers");
    std::vector<LayerSpec> specs;
    int input_dim = layers.front().at("in").get<int>();
    int prev = input_dim;
    for (const auto& l : layers) {
      if (l.at("in").get<int>() != prev) throw FormatError("mlp record layers do not chain");
      specs.push_back({l.at("out").get<int>(), ActivationFromName(l.at("activation").get<std::string>())});
      prev = specs.back().out;
    }
    Mlp net = Mlp::Zeros(input_dim, specs);
    net.Assign(j.at("params").get<std::vector<double>>());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed mlp record: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("malformed mlp record: ") + e.what());
  }
}

Mlp MlpFromJson(const nlohmann::json& j, const Mlp& expected) {
  Mlp net = MlpFromJson(j);
  if (!net.SameArchitecture(expected)) throw FormatError("checkpoint architecture mismatch");
  return net;
}

}  // namespace lepus::nn
