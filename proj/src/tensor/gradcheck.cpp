#include "fsb/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fsb/errors.hpp"

namespace fsb {

template <class T>
double grad_check(const ScalarFn<T>& fn, std::vector<Tensor<T>> inputs, double h, double floor) {
  if (!(h > 0)) throw ContractError("grad_check: step must be positive");
  if (!(floor > 0)) throw ContractError("grad_check: floor must be positive");
  std::vector<bool> previous;
  for (auto& t : inputs) {
    if (!t.is_leaf()) throw ContractError("grad_check: inputs must be leaf tensors");
    previous.push_back(t.requires_grad());
    t.set_requires_grad(true);
  }

  Tape<T>::current().reset();
  std::vector<Tensor<T>> analytic;
  {
    GradModeGuard on(true);
    auto loss = fn(std::span<const Tensor<T>>(inputs));
    analytic = grad(loss, std::span<const Tensor<T>>(inputs), false);
  }
  Tape<T>::current().reset();

  auto eval = [&]() -> double {
    NoGradGuard off;
    return static_cast<double>(fn(std::span<const Tensor<T>>(inputs)).item());
  };

  double worst = 0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_data();
    auto a = analytic[t].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      // Fourth-order central difference, evaluated at representable offsets.
      auto at = [&](double k) {
        const T x = static_cast<T>(saved + k * h);
        values[i] = x;
        return std::pair<double, double>(static_cast<double>(x) - static_cast<double>(saved), eval());
      };
      const auto [d2m, f2m] = at(-2);
      const auto [d1m, f1m] = at(-1);
      const auto [d1p, f1p] = at(1);
      const auto [d2p, f2p] = at(2);
      values[i] = saved;
      const double numeric =
          (8 * (f1p - f1m) - (f2p - f2m)) / (8 * (d1p - d1m) - (d2p - d2m));
      const double an = static_cast<double>(a[i]);
      const double denom = std::max({std::abs(an), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(an - numeric) / denom);
    }
  }
  for (std::size_t t = 0; t < inputs.size(); ++t) inputs[t].set_requires_grad(previous[t]);
  return worst;
}

template double grad_check(const ScalarFn<float>&, std::vector<Tensor<float>>, double, double);
template double grad_check(const ScalarFn<double>&, std::vector<Tensor<double>>, double, double);

}  // namespace fsb
