#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lim/tensor.hpp"

namespace lim {

// Scalar computation under test. Must return the loss for the given parameter
// values; when `grads` is non-null it must also fill one same-shaped gradient
// tensor per parameter (typically by running a tape backward).
using ScalarComputation =
    std::function<double(const std::vector<Tensor>& params, std::vector<Tensor>* grads)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;   // index into params
  std::size_t worst_coord = 0;   // flat index within that parameter
  double analytic = 0.0;         // values at the worst coordinate
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Central-difference verification of the computation's analytic gradients.
// For every coordinate: numeric = (f(x+h) - f(x-h)) / (2h), relative error =
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). The step must lie
// in [1e-6, 1e-4]; a non-finite loss at any probe point raises NumericError.
GradCheckReport grad_check(const ScalarComputation& computation, std::vector<Tensor> params,
                           double h);

}  // namespace lim
