#pragma once

#include <functional>
#include <vector>

#include "ghost/autograd/tensor.hpp"

namespace ghost::ag {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of the scalar `f` with central finite
/// differences for every element of `params`. The error per element is
/// |analytic − numeric| / max(|analytic|, |numeric|, floor).
/// `max_elements_per_param` > 0 samples a deterministic, evenly strided
/// subset of each parameter.
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h = 1e-5,
                           double floor = 1e-5, std::size_t max_elements_per_param = 0);

}  // namespace ghost::ag
