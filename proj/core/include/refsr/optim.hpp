#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "refsr/checkpoint.hpp"

namespace refsr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over the arrays of one NetworkParams. Moments are keyed by array name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(NetworkParams& params, const std::map<std::string, Tensor>& grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  /// Optimizer state as a checkpoint section ("adam:<arch_id>").
  NetworkParams state(const std::string& arch_id) const;
  void load_state(const NetworkParams& state);

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace refsr
