#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsb/tensor.hpp"

namespace fsb {

inline constexpr double kDefaultLr = 1e-3;

template <class T>
struct AdamState {
  double lr = kDefaultLr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  /// Zeroed moments shaped like `params`.
  static AdamState for_params(std::span<const Tensor<T>> params, double lr = kDefaultLr);
};

/// One bias-corrected Adam update applied in place to leaf `params`.
/// Moment buffers are created on the first call if the state is empty.
template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const std::vector<T>> grads);

/// Same, reading gradients from the parameters' grad slots (absent slots count as zero).
template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params);

}  // namespace fsb
