#pragma once

#include <functional>
#include <vector>

#include "funginet/tensor.hpp"

namespace funginet {

// Forward map under test: consumes the given inputs, returns one output
// tensor. Called repeatedly with perturbed copies, so it must be a pure
// function of the inputs (fix any rng seed inside the closure).
using GradCheckOp = std::function<Tensor(const std::vector<Tensor>&)>;

// Central-difference gradient verification in float64. The op output is
// reduced to a scalar by summation; returns the max over all input entries of
//   |analytic - fd| / max(|analytic|, |fd|, 1e-8)
// with fd = (f(x+h) - f(x-h)) / (2h). Inputs must be float64 and bounded
// away from the op's non-differentiable points.
double grad_check(const GradCheckOp& op, const std::vector<Tensor>& inputs,
                  double step = 1e-5);

}  // namespace funginet
