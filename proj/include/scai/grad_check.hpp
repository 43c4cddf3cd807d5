#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "scai/tensor.hpp"

namespace scai {

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool passed = true;
  // Worst-offending element.
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  std::string describe() const;
};

using GradCheckFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of `fn` against central finite
/// differences for every element of every input.
///
/// Non-scalar outputs are contracted with a fixed pseudo-random weight
/// vector first. The relative error of an element is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4), so values near
/// zero are judged on an absolute scale. Inputs are restored afterwards.
GradCheckResult grad_check(const GradCheckFn& fn, const std::vector<Tensor>& inputs, double rel_tol,
                           double step = 1e-5);

}  // namespace scai
