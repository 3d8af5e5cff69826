#pragma once

#include <cstdint>
#include <vector>

#include "egunet/layers.hpp"

namespace egu {

// Polynomial decay: base_lr * (1 - iter / max_iter)^power, clamped to zero
// once iter reaches max_iter.
double poly_lr(std::int64_t iter, double base_lr, double power, std::int64_t max_iter);

struct AdamConfig {
  double base_lr = 0.1;
  double power = 0.99;
  std::int64_t max_iter = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Adam with bias correction and a polynomial learning-rate schedule.  The
// parameter list is deduplicated by address, so a parameter aliased by two
// layers receives its two gradient contributions in one buffer and exactly
// one update per step.
class Adam {
 public:
  Adam(std::vector<ParamPtr> params, AdamConfig cfg);

  void step();
  void zero_grad();

  std::int64_t steps_taken() const { return t_; }
  // Learning rate the next step() call will apply.
  double next_lr() const { return poly_lr(t_, cfg_.base_lr, cfg_.power, cfg_.max_iter); }

 private:
  std::vector<ParamPtr> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace egu
