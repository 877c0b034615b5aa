#include "fsb/adam.hpp"

#include <cmath>

#include "fsb/errors.hpp"

namespace fsb {

template <class T>
AdamState<T> AdamState<T>::for_params(std::span<const Tensor<T>> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), T(0));
    s.v.emplace_back(p.numel(), T(0));
  }
  return s;
}

template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const std::vector<T>> grads) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient count does not match parameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state was built for other parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != data.size() || m.size() != data.size()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has " + std::to_string(g.size()) +
                           " entries, parameter has " + std::to_string(data.size()));
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = static_cast<T>(state.beta1 * m[k] + (1.0 - state.beta1) * g[k]);
      v[k] = static_cast<T>(state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k]);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      data[k] = static_cast<T>(data[k] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params) {
  std::vector<std::vector<T>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    if (p.has_grad()) {
      grads.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      grads.emplace_back(p.numel(), T(0));
    }
  }
  adam_step(state, params, std::span<const std::vector<T>>(grads));
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, std::span<Tensor<float>>, std::span<const std::vector<float>>);
template void adam_step<double>(AdamState<double>&, std::span<Tensor<double>>, std::span<const std::vector<double>>);
template void adam_step<float>(AdamState<float>&, std::span<Tensor<float>>);
template void adam_step<double>(AdamState<double>&, std::span<Tensor<double>>);

}  // namespace fsb
