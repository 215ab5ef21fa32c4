#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>

#include <Eigen/Dense>

#include "tcl/error.hpp"

namespace tcl {

struct OptimConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 100;

  void validate() const {
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  }
};

// base_lr * (1 + cos(pi * epoch / epochs)) / 2
inline double cosine_lr(const OptimConfig& cfg, std::size_t epoch) {
  if (cfg.epochs == 0) return cfg.base_lr;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// SGD with momentum and L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// `Params` is any type with a for_each_tensor overload (Network, Dense).
template <class Params>
class Sgd {
 public:
  Sgd(const OptimConfig& cfg, const Params& like) : cfg_(cfg), velocity_(like) {
    for_each_tensor([](auto& t) { t.setZero(); }, velocity_);
  }

  void step(Params& params, const Params& grads, double lr) {
    for_each_tensor(
        [&](auto& p, auto& v, auto& gr) {
          v = cfg_.momentum * v + gr + cfg_.weight_decay * p;
          p -= lr * v;
        },
        params, velocity_, grads);
  }

  void step_epoch(Params& params, const Params& grads, std::size_t epoch) {
    step(params, grads, cosine_lr(cfg_, epoch));
  }

  const Params& velocity() const { return velocity_; }

 private:
  OptimConfig cfg_;
  Params velocity_;
};

}  // namespace tcl
