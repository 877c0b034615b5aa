#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fsb/tensor.hpp"

namespace fsb {

/// [N x m] matrix whose row j averages the support rows labelled j.
/// Throws ContractError when a class has no support sample.
template <class T>
Tensor<T> class_mean_matrix(std::span<const int> labels, std::size_t n_way);
/// Same layout, summing instead of averaging.
template <class T>
Tensor<T> class_sum_matrix(std::span<const int> labels, std::size_t n_way);

/// Negative squared distance from each query to each class prototype.
template <class T>
Tensor<T> protonet_logits(const Tensor<T>& support, std::span<const int> support_y, const Tensor<T>& query,
                          std::size_t n_way);

inline constexpr double kDefaultMatchingTau = 100.0;

/// tau times the mean cosine similarity between a query and each class's supports.
template <class T>
Tensor<T> matchingnet_logits(const Tensor<T>& support, std::span<const int> support_y, const Tensor<T>& query,
                             std::size_t n_way, double tau);

// Relation module: two blocks of conv3x3(pad 1) -> batchnorm (batch statistics)
// -> relu -> 2x2 maxpool (skipped once an extent drops below 2), then
// fc -> relu -> fc producing one score per (query, class) pair.

template <class T>
struct RelationParams {
  Shape map;  // {C, h, w} of the backbone maps it consumes
  int hidden = 8;
  /// {k1, g1, b1, k2, g2, b2, W1, c1, W2, c2}
  std::vector<Tensor<T>> tensors;

  static RelationParams init(const Shape& map, int hidden, std::uint64_t seed);
  std::size_t fc_inputs() const;
};

/// Scores [M x N] from support maps [N*k x C x h x w] and query maps [M x C x h x w].
template <class T>
Tensor<T> relationnet_scores(const Tensor<T>& support_maps, std::span<const int> support_y,
                             const Tensor<T>& query_maps, std::size_t n_way, const Shape& map,
                             std::span<const Tensor<T>> params);
template <class T>
Tensor<T> relationnet_scores(const Tensor<T>& support_maps, std::span<const int> support_y,
                             const Tensor<T>& query_maps, std::size_t n_way, const RelationParams<T>& params);

struct MamlConfig {
  double inner_lr = 0.01;
  int inner_steps_train = 5;
  int inner_steps_test = 10;
  bool first_order = true;
};

template <class T>
using ParamsLoss = std::function<Tensor<T>(std::span<const Tensor<T>> params)>;

/// Plain gradient descent on `support_loss` starting from `init`.
/// With first_order the result is a set of fresh leaves; otherwise the
/// result stays connected to `init` through the recorded inner updates.
template <class T>
std::vector<Tensor<T>> maml_inner_adapt(std::span<const Tensor<T>> init, const ParamsLoss<T>& support_loss,
                                        double inner_lr, int steps, bool first_order);

template <class T>
struct MamlTask {
  ParamsLoss<T> support_loss;
  ParamsLoss<T> query_loss;
};

/// Gradient of the mean query loss after adaptation with respect to `init`.
/// `query_loss_out`, when given, receives the mean post-adaptation query loss.
template <class T>
std::vector<Tensor<T>> maml_meta_step(std::span<const Tensor<T>> init, std::span<const MamlTask<T>> tasks,
                                      double inner_lr, int steps, bool first_order,
                                      double* query_loss_out = nullptr);

}  // namespace fsb
