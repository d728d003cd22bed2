#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "msgwtcn/error.hpp"
#include "msgwtcn/tensor.hpp"

namespace msgw {

// v <- alpha v + (1-alpha) g^2;  theta <- theta - lr g / (sqrt(v) + eps)
class Rmsprop {
public:
  // lr = 0 is accepted (a step then leaves parameters bit-identical); the
  // training config separately insists on lr > 0.
  Rmsprop(double learning_rate = 0.001, double alpha = 0.99, double eps = 1e-8)
      : lr_(learning_rate), alpha_(alpha), eps_(eps) {
    if (!(learning_rate >= 0.0)) throw ConfigError("rmsprop: learning_rate must be >= 0");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("rmsprop: alpha must be in [0,1)");
  }

  // clip_norm <= 0 disables clipping; when the global gradient norm is within
  // the threshold the gradients are left untouched (no rescale by 1.0), so a
  // huge threshold is bit-identical to disabled.
  void step(const std::vector<std::pair<std::string, Tensor>>& params, double clip_norm = 0.0) {
    if (state_.empty()) {
      for (const auto& [name, t] : params) state_.emplace_back(t.numel(), 0.0);
    }
    if (state_.size() != params.size())
      throw ShapeError("rmsprop: parameter set changed between steps");

    for (const auto& [name, t] : params) {
      for (double g : t.grad())
        if (!std::isfinite(g))
          throw NonFiniteError("rmsprop_step: non-finite gradient in '" + name + "'");
    }
    if (clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& [name, t] : params)
        for (double g : t.grad()) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (const auto& [name, t] : params)
          for (double& g : t.grad()) g *= scale;
      }
    }

    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& name = params[i].first;
      Tensor t = params[i].second;  // shared handle
      auto& v = state_[i];
      if (v.size() != t.numel()) throw ShapeError("rmsprop: state/parameter shape mismatch for '" + name + "'");
      const auto& g = t.grad();
      auto& theta = t.value();
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = alpha_ * v[k] + (1.0 - alpha_) * g[k] * g[k];
        theta[k] -= lr_ * g[k] / (std::sqrt(v[k]) + eps_);
        if (!std::isfinite(theta[k]))
          throw NonFiniteError("rmsprop_step: non-finite parameter value in '" + name + "'");
      }
    }
  }

  const std::vector<std::vector<double>>& state() const { return state_; }

private:
  double lr_, alpha_, eps_;
  std::vector<std::vector<double>> state_;
};

}  // namespace msgw
