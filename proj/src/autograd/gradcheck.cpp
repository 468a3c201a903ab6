#include "ghost/autograd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ghost/error.hpp"

namespace ghost::ag {

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double h, double floor,
                           std::size_t max_elements_per_param) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw Error(ErrorCode::InvalidArgument, "grad_check step must be in [1e-6, 1e-3]");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    backward(loss);
    for (const auto& p : params) analytic.push_back(p.grad());
    for (auto p : params) p.zero_grad();
  }

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    const std::size_t n = p.numel();
    const std::size_t stride = max_elements_per_param > 0 && n > max_elements_per_param ? n / max_elements_per_param : 1;
    for (std::size_t j = 0; j < n; j += stride) {
      const double saved = p.data()[j];
      p.data()[j] = saved + h;
      const double up = f().item();
      p.data()[j] = saved - h;
      const double down = f().item();
      p.data()[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++res.checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = pi;
        res.worst_index = j;
      }
    }
  }
  return res;
}

}  // namespace ghost::ag
