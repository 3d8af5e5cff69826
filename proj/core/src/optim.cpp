#include "egunet/optim.hpp"

#include <cmath>
#include <unordered_set>

#include "egunet/errors.hpp"

namespace egu {

double poly_lr(std::int64_t iter, double base_lr, double power, std::int64_t max_iter) {
  if (iter < 0) throw ConfigError("poly_lr: iteration must be non-negative");
  if (max_iter < 1) throw ConfigError("poly_lr: max_iter must be positive");
  if (base_lr <= 0.0) throw ConfigError("poly_lr: base learning rate must be positive");
  if (power <= 0.0) throw ConfigError("poly_lr: power must be positive");
  if (iter >= max_iter) return 0.0;
  double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base_lr * std::pow(frac, power);
}

void AdamConfig::validate() const {
  if (base_lr <= 0.0) throw ConfigError("adam: base learning rate must be positive");
  if (power <= 0.0) throw ConfigError("adam: poly power must be positive");
  if (max_iter < 1) throw ConfigError("adam: max_iter must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (eps <= 0.0) throw ConfigError("adam: eps must be positive");
}

Adam::Adam(std::vector<ParamPtr> params, AdamConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::unordered_set<const Param*> seen;
  for (auto& p : params) {
    if (p && seen.insert(p.get()).second) params_.push_back(std::move(p));
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  double lr = next_lr();
  double t = static_cast<double>(t_ + 1);
  double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    for (std::int64_t j = 0; j < p.value.size(); ++j) {
      double g = p.grad[j];
      double m = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      double v = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      m_[i][j] = m;
      v_[i][j] = v;
      p.value[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
    }
  }
  ++t_;
}

void Adam::zero_grad() {
  for (const auto& p : params_) p->grad.fill(0.0);
}

}  // namespace egu
