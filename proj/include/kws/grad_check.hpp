// Copyright 2026 The kws-toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

/// Finite-difference certification of an analytic gradient, run in 64-bit.
///
/// `loss` evaluates the scalar loss at the current contents of `inputs`;
/// `analytic` holds d loss / d input for each tensor, aligned with
/// `inputs`. Each coordinate is perturbed by +-eps*(|value|+1) and the
/// central difference is compared against the analytic entry. Returns the
/// maximum relative error |a - n| / max(|a|, |n|, 1e-6) over all
/// coordinates. The 1e-6 denominator floor matches the method's own
/// resolution: with a loss of order 1 evaluated in 64-bit, the central
/// difference carries ~1e-11 of absolute round-off, so gradients below
/// ~1e-6 cannot be resolved to a tighter relative error and would
/// otherwise report spurious failures. A non-differentiable probe point
/// still shows up as a large returned error; it is reported, never
/// masked.
inline double grad_check(const std::function<double()>& loss,
                         const std::vector<Tensor<double>*>& inputs,
                         const std::vector<Tensor<double>>& analytic,
                         double eps = 1e-5) {
  if (inputs.size() != analytic.size())
    throw Error("grad_check: inputs/analytic count mismatch");
  double max_rel = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor<double>& x = *inputs[t];
    if (!x.same_shape(analytic[t]))
      throw Error(cat("grad_check: shape mismatch at tensor ", t));
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double saved = x[i];
      const double h = eps * (std::abs(saved) + 1.0);
      x[i] = saved + h;
      const double lp = loss();
      x[i] = saved - h;
      const double lm = loss();
      x[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace kws
