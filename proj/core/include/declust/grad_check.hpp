#pragma once

#include <functional>

#include "declust/tensor.hpp"

namespace declust {

/// Central-difference gradient of a scalar function of one tensor:
/// (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate. Independent oracle
/// for every analytic gradient in the framework; rejects non-finite
/// evaluations.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-4);

/// max_i |a_i - b_i| / max(1, ||a||_inf, ||b||_inf). The floor of 1 keeps
/// near-zero gradients comparable in absolute terms.
double rel_error(const Tensor& a, const Tensor& b);

}  // namespace declust
