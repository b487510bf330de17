#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmnet/tensor.hpp"

namespace mmnet {

struct SgdConfig {
  double learning_rate = 0.0025;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// SGD with momentum, weight decay folded into the gradient:
//   v <- momentum*v + g + weight_decay*p
//   p <- p - lr*v
// Gradients of tracked parameters are zeroed after each step.
class SgdOptimizer {
 public:
  SgdOptimizer(SgdConfig cfg, std::vector<std::pair<std::string, Tensor>> params)
      : cfg_(cfg), params_(std::move(params)) {
    if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("sgd: learning_rate must be > 0");
    if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    if (cfg_.weight_decay < 0.0) throw std::invalid_argument("sgd: weight_decay must be >= 0");
    velocity_.reserve(params_.size());
    for (auto& [name, p] : params_) {
      (void)name;
      velocity_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& [name, p] = params_[pi];
      if (!p.has_grad()) throw std::runtime_error("sgd: missing gradient for tracked parameter '" + name + "'");
      auto& v = velocity_[pi];
      auto& g = p.grad();
      auto& w = p.data();
      const double mom = cfg_.momentum, wd = cfg_.weight_decay, lr = cfg_.learning_rate;
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mom * v[i] + g[i] + wd * w[i];
        w[i] -= lr * v[i];
        g[i] = 0.0;
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) {
      (void)name;
      p.zero_grad();
    }
  }

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

 private:
  SgdConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace mmnet
