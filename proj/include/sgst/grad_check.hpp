#pragma once

#include <functional>

#include "sgst/tensor.hpp"

namespace sgst {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// max_i |a_i - b_i| / max(max|a|, max|b|, floor). The floor keeps all-zero gradients comparable.
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8);

}  // namespace sgst
