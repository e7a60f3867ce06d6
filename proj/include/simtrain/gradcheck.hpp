#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "simtrain/tensor.hpp"

namespace simtrain {

/// Central-difference gradient of a scalar function, one element at a time.
/// Used as the reference when checking backward().
inline Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                         double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_gradient: eps must be positive");
  Tensor probe = x.detach();
  std::vector<double> grad(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe.storage()[i];
    probe.mutable_values()[i] = orig + eps;
    const double up = f(probe);
    probe.mutable_values()[i] = orig - eps;
    const double down = f(probe);
    probe.mutable_values()[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return Tensor::unchecked(x.shape(), std::move(grad));
}

/// Relative error with an absolute floor, so entries whose true gradient is
/// ~0 are compared absolutely instead of blowing up.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace simtrain
