#pragma once

// Central finite-difference check of Backward on random small networks.

#include <algorithm>
#include <cmath>
#include <random>

#include "lepus/nn.hpp"

namespace lepus::testing {

struct GradCheckStats {
  int nets = 0;
  int resampled = 0;
  double max_rel_error = 0.0;
};

inline double RelError(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// True when some ReLU-family pre-activation sits close enough to its kink
// that an h-sized perturbation could cross it.
inline bool NearKink(const nn::Mlp& net, const nn::ForwardCache& cache, double margin) {
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto act = net.layer(k).activation;
    if (act != nn::Activation::kRelu && act != nn::Activation::kLeakyRelu) continue;
    if ((cache.pre_activations[k].array().abs() < margin).any()) return true;
  }
  return false;
}

inline GradCheckStats RunGradCheck(int n_nets, std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_int_distribution<int> depth(1, 3);
  std::uniform_int_distribution<int> act(0, 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  GradCheckStats stats;
  while (stats.nets < n_nets) {
    const int in = dim(rng);
    std::vector<nn::LayerSpec> specs;
    const int layers = depth(rng);
    for (int k = 0; k < layers; ++k) specs.push_back({dim(rng), static_cast<nn::Activation>(act(rng))});
    nn::Mlp net = nn::Mlp::Random(in, specs, rng);
    Eigen::VectorXd x(in);
    for (auto& v : x) v = normal(rng);
    Eigen::VectorXd u(net.output_dim());
    for (auto& v : u) v = normal(rng);

    const nn::ForwardCache cache = nn::ForwardWithCache(net, x);
    if (NearKink(net, cache, 1e-4)) {
      ++stats.resampled;
      continue;
    }
    const nn::BackwardResult back = nn::Backward(net, cache, u);
    auto objective = [&](const nn::Mlp& n, const Eigen::VectorXd& in_x) { return u.dot(nn::Forward(n, in_x).col(0)); };

    std::vector<double> flat = net.Flatten();
    std::vector<double> analytic;
    for (std::size_t k = 0; k < net.num_layers(); ++k) {
      const auto& gw = back.grads.weight[k];
      const auto& gb = back.grads.bias[k];
      // Flatten order: weight (column-major) then bias, per layer.
      analytic.insert(analytic.end(), gw.data(), gw.data() + gw.size());
      analytic.insert(analytic.end(), gb.data(), gb.data() + gb.size());
    }
    nn::Mlp probe = net;
    for (std::size_t p = 0; p < flat.size(); ++p) {
      const double keep = flat[p];
      flat[p] = keep + h;
      probe.Assign(flat);
      const double up = objective(probe, x);
      flat[p] = keep - h;
      probe.Assign(flat);
      const double down = objective(probe, x);
      flat[p] = keep;
      stats.max_rel_error = std::max(stats.max_rel_error, RelError(analytic[p], (up - down) / (2 * h)));
    }
    for (Eigen::Index i = 0; i < in; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double numeric = (objective(net, xp) - objective(net, xm)) / (2 * h);
      stats.max_rel_error = std::max(stats.max_rel_error, RelError(back.input_grad(i, 0), numeric));
    }
    ++stats.nets;
  }
  return stats;
}

}  // namespace lepus::testing
