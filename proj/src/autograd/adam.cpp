#include "ghost/autograd/adam.hpp"

#include <algorithm>
#include <cmath>

namespace ghost::ag {

double warmup_lr(const AdamConfig& cfg, std::uint64_t step) {
  if (cfg.warmup_steps == 0) return cfg.lr_max;
  return cfg.lr_max * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double lr = warmup_lr(cfg_, step_);
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Node& node = *params_[i].node();
    if (node.grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < node.data.size(); ++j) {
      const double g = node.grad[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      node.data[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ghost::ag
