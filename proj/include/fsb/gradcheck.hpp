#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fsb/tensor.hpp"

namespace fsb {

template <class T>
using ScalarFn = std::function<Tensor<T>(std::span<const Tensor<T>> inputs)>;

/// Largest relative disagreement between reverse-mode gradients of `fn` and
/// central differences with step `h`, over every coordinate of every input.
/// The relative error of a coordinate is |a - n| / max(|a|, |n|, floor).
/// Inputs are perturbed in place and restored; they must be leaves.
template <class T>
double grad_check(const ScalarFn<T>& fn, std::vector<Tensor<T>> inputs, double h,
                  double floor = 1e-8);

}  // namespace fsb
