#include <string>

#include "fsb/errors.hpp"
#include "fsb/meta.hpp"
#include "fsb/ops.hpp"

namespace fsb {

namespace {

template <class T>
std::vector<Tensor<T>> fresh_leaves(std::span<const Tensor<T>> params) {
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    auto leaf = p.detach();
    leaf.set_requires_grad(true);
    out.push_back(std::move(leaf));
  }
  return out;
}

}  // namespace

template <class T>
std::vector<Tensor<T>> maml_inner_adapt(std::span<const Tensor<T>> init, const ParamsLoss<T>& support_loss,
                                        double inner_lr, int steps, bool first_order) {
  if (steps < 0) throw ConfigError("maml: inner steps must be non-negative");
  GradModeGuard on(true);
  const T lr = static_cast<T>(inner_lr);
  if (first_order) {
    auto params = fresh_leaves(init);
    for (int s = 0; s < steps; ++s) {
      auto g = grad(support_loss(params), std::span<const Tensor<T>>(params), false);
      for (std::size_t i = 0; i < params.size(); ++i) {
        auto v = params[i].mutable_data();
        auto gv = g[i].data();
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * gv[k];
      }
    }
    return params;
  }
  std::vector<Tensor<T>> params(init.begin(), init.end());
  for (int s = 0; s < steps; ++s) {
    auto g = grad(support_loss(params), std::span<const Tensor<T>>(params), true);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = sub(params[i], scale(g[i], lr));
  }
  return params;
}

template <class T>
std::vector<Tensor<T>> maml_meta_step(std::span<const Tensor<T>> init, std::span<const MamlTask<T>> tasks,
                                      double inner_lr, int steps, bool first_order, double* query_loss_out) {
  if (tasks.empty()) throw ContractError("maml_meta_step: needs at least one task");
  GradModeGuard on(true);
  std::vector<std::vector<T>> acc(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) acc[i].assign(init[i].numel(), T(0));
  double loss_sum = 0;

  for (const auto& task : tasks) {
    std::vector<Tensor<T>> g;
    if (first_order) {
      // Adapted parameters are init minus detached deltas, so d(query)/d(init)
      // is the query gradient at the adapted point.
      auto adapted = maml_inner_adapt<T>(init, task.support_loss, inner_lr, steps, true);
      auto q = task.query_loss(adapted);
      loss_sum += static_cast<double>(q.item());
      g = grad(q, std::span<const Tensor<T>>(adapted), false);
    } else {
      for (const auto& p : init) {
        if (!p.is_leaf()) throw ContractError("maml_meta_step: initial parameters must be leaves");
      }
      auto adapted = maml_inner_adapt<T>(init, task.support_loss, inner_lr, steps, false);
      auto q = task.query_loss(adapted);
      loss_sum += static_cast<double>(q.item());
      g = grad(q, init, false);
      Tape<T>::current().reset();
    }
    for (std::size_t i = 0; i < init.size(); ++i) {
      auto gv = g[i].data();
      for (std::size_t k = 0; k < gv.size(); ++k) acc[i][k] += gv[k];
    }
  }

  const T inv = T(1) / static_cast<T>(tasks.size());
  std::vector<Tensor<T>> out;
  out.reserve(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    for (auto& v : acc[i]) v *= inv;
    out.emplace_back(init[i].shape(), std::move(acc[i]));
  }
  if (query_loss_out) *query_loss_out = loss_sum / static_cast<double>(tasks.size());
  return out;
}

#define FSB_INSTANTIATE_MAML(T)                                                                              \
  template std::vector<Tensor<T>> maml_inner_adapt<T>(std::span<const Tensor<T>>, const ParamsLoss<T>&,     \
                                                      double, int, bool);                                    \
  template std::vector<Tensor<T>> maml_meta_step<T>(std::span<const Tensor<T>>, std::span<const MamlTask<T>>, \
                                                    double, int, bool, double*);

FSB_INSTANTIATE_MAML(float)
FSB_INSTANTIATE_MAML(double)

}  // namespace fsb
