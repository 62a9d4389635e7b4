#pragma once

#include <functional>
#include <vector>

#include "advinn/tensor.hpp"

namespace advinn {

// Compares reverse-mode gradients against central differences.
//
// `f` must be deterministic and return a scalar computed from `inputs`
// (captured by reference; the checker perturbs them in place and restores
// them). Returns max over all coordinates of
//   |g_analytic - g_numeric| / max(1, |g_numeric|).
// Throws ContractError for h outside [1e-6, 1e-3] and DomainError when f is
// not finite at the evaluation point.
double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h);

// Single-argument form: f(x) with x perturbed.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace advinn
