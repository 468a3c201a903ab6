#pragma once

#include <cstdint>
#include <vector>

#include "ghost/autograd/tensor.hpp"

namespace ghost::ag {

struct AdamConfig {
  double lr_max = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Linear warmup length; 0 disables warmup.
  std::uint64_t warmup_steps = 500;
};

/// lr(t) = lr_max · min(1, t / warmup_steps) for step t >= 1.
double warmup_lr(const AdamConfig& cfg, std::uint64_t step);

/// Bias-corrected Adam over a fixed parameter list. Moments are stored per
/// parameter in the same order as `params`.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();

  std::uint64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t s) { step_ = s; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

}  // namespace ghost::ag
