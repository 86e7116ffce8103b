#include "sharekd/numkit/check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sharekd::nk {

GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Tensor> params, double step) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
  }

  auto evaluate = [&]() {
    Tape tape(false);
    return loss_fn(tape).item();
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = evaluate();
      values[i] = saved - step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sharekd::nk
