#pragma once

#include <functional>
#include <span>

#include "sharekd/numkit/tape.hpp"
#include "sharekd/numkit/tensor.hpp"

namespace sharekd::nk {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

using LossFn = std::function<Tensor(Tape&)>;

// Compares tape gradients with central differences over every coordinate of
// `params`. Relative error is |a - n| / max(|a|, |n|, 1e-8). Parameter values
// are restored afterwards; their gradient buffers are left holding the
// analytic gradient.
GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Tensor> params, double step);

}  // namespace sharekd::nk
