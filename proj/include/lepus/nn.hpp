#pragma once

// Dense multilayer perceptrons with exact reverse-mode gradients, Adam and
// target-network soft updates. Batches are column-major: one sample per column.

#include <Eigen/Dense>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string_view>
#include <vector>

#include "lepus/random.hpp"

namespace lepus::nn {

enum class Activation { kRelu, kLeakyRelu, kTanh, kSigmoid, kIdentity };

inline constexpr double kLeakySlope = 0.01;

std::string_view ActivationName(Activation activation);
Activation ActivationFromName(std::string_view name);

struct LayerSpec {
  int out = 0;
  Activation activation = Activation::kIdentity;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;
};

// Per-parameter buffers laid out like an Mlp (gradients, Adam moments).
struct ParamBuffers {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  void SetZero();
  bool AllFinite() const;
  double MaxAbs() const;
  void Scale(double factor);
  ParamBuffers& operator+=(const ParamBuffers& other);
};

class Mlp {
 public:
  Mlp() = default;
  // Validates that layer dimensions chain and that all values are finite.
  explicit Mlp(std::vector<Layer> layers);

  static Mlp Zeros(int input_dim, std::span<const LayerSpec> specs);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static Mlp Random(int input_dim, std::span<const LayerSpec> specs, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_params() const;
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t k) const { return layers_.at(k); }

  bool SameArchitecture(const Mlp& other) const;
  ParamBuffers ZeroBuffers() const;

  // Values may change; the architecture may not.
  void SetLayer(std::size_t k, const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias);
  void AddScaled(const ParamBuffers& delta, double scale);

  std::vector<double> Flatten() const;
  void Assign(std::span<const double> flat);
  std::uint64_t Digest() const;

  // Mutable access is restricted to the optimizer and mixing routines.
  friend class AdamState;
  friend void SoftUpdate(Mlp& target, const Mlp& source, double mix);

 private:
  std::vector<Layer> layers_;
};

struct ForwardCache {
  // activations[0] is the input; activations[k+1] is the output of layer k.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> pre_activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

struct BackwardResult {
  ParamBuffers grads;          // summed over the batch
  Eigen::MatrixXd input_grad;  // in x batch (empty if not requested)
};

Eigen::MatrixXd Forward(const Mlp& net, const Eigen::MatrixXd& input);
ForwardCache ForwardWithCache(const Mlp& net, const Eigen::MatrixXd& input);
BackwardResult Backward(const Mlp& net, const ForwardCache& cache,
                        const Eigen::MatrixXd& upstream, bool need_input_grad = true);
// Gradient w.r.t. the input only (no parameter gradients).
Eigen::MatrixXd InputGradient(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream);

// Single-sample conveniences.
Eigen::VectorXd MlpForward(const Mlp& net, const Eigen::VectorXd& x);
BackwardResult MlpBackward(const Mlp& net, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& params, AdamConfig config);

  // One descent step. Throws (leaving both params and state untouched) when
  // the gradients are non-finite or mis-shaped.
  void Step(Mlp& params, const ParamBuffers& grads);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const ParamBuffers& first_moment() const { return m_; }
  const ParamBuffers& second_moment() const { return v_; }

  nlohmann::json ToJson() const;
  static AdamState FromJson(const nlohmann::json& j, const Mlp& params);

 private:
  AdamConfig config_;
  ParamBuffers m_;
  ParamBuffers v_;
  std::int64_t step_ = 0;
};

// target <- mix * source + (1 - mix) * target, mix in (0, 1].
void SoftUpdate(Mlp& target, const Mlp& source, double mix);

// Checkpoint record: architecture plus a flat parameter array.
nlohmann::json ToJson(const Mlp& net);
Mlp MlpFromJson(const nlohmann::json& j);
// Loads and rejects anything whose architecture differs from `expected`.
Mlp MlpFromJson(const nlohmann::json& j, const Mlp& expected);

}  // namespace lepus::nn
