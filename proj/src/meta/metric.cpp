#include <cmath>
#include <string>

#include "fsb/errors.hpp"
#include "fsb/meta.hpp"
#include "fsb/ops.hpp"
#include "fsb/rng.hpp"

namespace fsb {

namespace {

template <class T>
Tensor<T> class_matrix(std::span<const int> labels, std::size_t n_way, bool average) {
  const std::size_t m = labels.size();
  std::vector<std::size_t> count(n_way, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_way) {
      throw IndexError("support label " + std::to_string(y) + " outside [0, " + std::to_string(n_way) + ")");
    }
    ++count[static_cast<std::size_t>(y)];
  }
  for (std::size_t j = 0; j < n_way; ++j) {
    if (count[j] == 0) throw ContractError("class " + std::to_string(j) + " has no support samples");
  }
  std::vector<T> a(n_way * m, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = static_cast<std::size_t>(labels[i]);
    a[j * m + i] = average ? T(1) / static_cast<T>(count[j]) : T(1);
  }
  return Tensor<T>({n_way, m}, std::move(a));
}

void check_pair(std::size_t support_rows, std::size_t labels, const char* op) {
  if (support_rows != labels) {
    throw DimensionError(std::string(op) + ": " + std::to_string(support_rows) + " support rows but " +
                         std::to_string(labels) + " labels");
  }
}

void after_pool(std::size_t& h, std::size_t& w) {
  if (h >= 2 && w >= 2) {
    h /= 2;
    w /= 2;
  }
}

void check_relation_map(const Shape& map) {
  if (map.size() != 3) throw ConfigError("relation module: feature maps must be {C, h, w}");
  if (map[1] < 2 || map[2] < 2) {
    throw ConfigError("relation module: feature map " + std::to_string(map[1]) + "x" + std::to_string(map[2]) +
                      " is too small for two conv blocks (need at least 2x2)");
  }
}

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

}  // namespace

template <class T>
Tensor<T> class_mean_matrix(std::span<const int> labels, std::size_t n_way) {
  return class_matrix<T>(labels, n_way, true);
}

template <class T>
Tensor<T> class_sum_matrix(std::span<const int> labels, std::size_t n_way) {
  return class_matrix<T>(labels, n_way, false);
}

template <class T>
Tensor<T> protonet_logits(const Tensor<T>& support, std::span<const int> support_y, const Tensor<T>& query,
                          std::size_t n_way) {
  check_pair(support.dim(0), support_y.size(), "protonet_logits");
  auto prototypes = matmul(class_mean_matrix<T>(support_y, n_way), support);
  return scale(euclidean_sqdist_matrix(query, prototypes), T(-1));
}

template <class T>
Tensor<T> matchingnet_logits(const Tensor<T>& support, std::span<const int> support_y, const Tensor<T>& query,
                             std::size_t n_way, double tau) {
  check_pair(support.dim(0), support_y.size(), "matchingnet_logits");
  auto sims = cosine_similarity_matrix(query, support);
  return scale(matmul_nt(sims, class_mean_matrix<T>(support_y, n_way)), static_cast<T>(tau));
}

template <class T>
std::size_t RelationParams<T>::fc_inputs() const {
  std::size_t h = map[1], w = map[2];
  for (int b = 0; b < 2; ++b) after_pool(h, w);
  return map[0] * h * w;
}

template <class T>
RelationParams<T> RelationParams<T>::init(const Shape& map, int hidden, std::uint64_t seed) {
  check_relation_map(map);
  if (hidden < 1) throw ConfigError("method.relation_hidden: must be positive");
  RelationParams p;
  p.map = map;
  p.hidden = hidden;
  Rng rng(seed);
  const std::size_t c = map[0];
  const auto hid = static_cast<std::size_t>(hidden);
  p.tensors.push_back(uniform_tensor<T>({c, 2 * c, 3, 3}, std::sqrt(6.0 / (2 * c * 9)), rng));
  p.tensors.push_back(Tensor<T>::full({c}, T(1), true));
  p.tensors.push_back(Tensor<T>::zeros({c}, true));
  p.tensors.push_back(uniform_tensor<T>({c, c, 3, 3}, std::sqrt(6.0 / (c * 9)), rng));
  p.tensors.push_back(Tensor<T>::full({c}, T(1), true));
  p.tensors.push_back(Tensor<T>::zeros({c}, true));
  const auto fc = p.fc_inputs();
  p.tensors.push_back(uniform_tensor<T>({fc, hid}, std::sqrt(6.0 / fc), rng));
  p.tensors.push_back(Tensor<T>::zeros({hid}, true));
  p.tensors.push_back(uniform_tensor<T>({hid, 1}, std::sqrt(6.0 / hid), rng));
  p.tensors.push_back(Tensor<T>::zeros({1}, true));
  return p;
}

template <class T>
Tensor<T> relationnet_scores(const Tensor<T>& support_maps, std::span<const int> support_y,
                             const Tensor<T>& query_maps, std::size_t n_way, const Shape& map,
                             std::span<const Tensor<T>> params) {
  check_relation_map(map);
  check_pair(support_maps.dim(0), support_y.size(), "relationnet_scores");
  auto tail = [](const Tensor<T>& t) { return Shape(t.shape().begin() + 1, t.shape().end()); };
  if (support_maps.rank() != 4 || tail(support_maps) != map || query_maps.rank() != 4 || tail(query_maps) != map) {
    throw DimensionError("relationnet_scores: maps " + shape_str(support_maps.shape()) + " / " +
                         shape_str(query_maps.shape()) + " do not match " + shape_str(map));
  }
  if (params.size() != 10) throw DimensionError("relationnet_scores: expected 10 parameter tensors");

  const std::size_t m = query_maps.dim(0);
  auto classes = matmul(class_sum_matrix<T>(support_y, n_way), flatten(support_maps));
  std::vector<int> class_idx(m * n_way), query_idx(m * n_way);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n_way; ++j) {
      class_idx[i * n_way + j] = static_cast<int>(j);
      query_idx[i * n_way + j] = static_cast<int>(i);
    }
  }
  auto pairs = concat_cols(gather_rows(classes, class_idx), gather_rows(flatten(query_maps), query_idx));
  Tensor<T> h = reshape(pairs, {m * n_way, 2 * map[0], map[1], map[2]});
  for (int b = 0; b < 2; ++b) {
    h = conv2d(h, params[3 * b], 1, 1);
    h = batchnorm2d(h, params[3 * b + 1], params[3 * b + 2], nullptr, BnMode::episode_batch);
    h = relu(h);
    if (h.dim(2) >= 2 && h.dim(3) >= 2) h = maxpool2d(h, 2, 2);
  }
  h = relu(add_row(matmul(flatten(h), params[6]), params[7]));
  h = add_row(matmul(h, params[8]), params[9]);
  return reshape(h, {m, n_way});
}

template <class T>
Tensor<T> relationnet_scores(const Tensor<T>& support_maps, std::span<const int> support_y,
                             const Tensor<T>& query_maps, std::size_t n_way, const RelationParams<T>& params) {
  return relationnet_scores<T>(support_maps, support_y, query_maps, n_way, params.map, params.tensors);
}

#define FSB_INSTANTIATE_METRIC(T)                                                                         \
  template Tensor<T> class_mean_matrix<T>(std::span<const int>, std::size_t);                             \
  template Tensor<T> class_sum_matrix<T>(std::span<const int>, std::size_t);                              \
  template Tensor<T> protonet_logits(const Tensor<T>&, std::span<const int>, const Tensor<T>&, std::size_t); \
  template Tensor<T> matchingnet_logits(const Tensor<T>&, std::span<const int>, const Tensor<T>&,         \
                                        std::size_t, double);                                             \
  template struct RelationParams<T>;                                                                      \
  template Tensor<T> relationnet_scores<T>(const Tensor<T>&, std::span<const int>, const Tensor<T>&,      \
                                           std::size_t, const Shape&, std::span<const Tensor<T>>);        \
  template Tensor<T> relationnet_scores<T>(const Tensor<T>&, std::span<const int>, const Tensor<T>&,      \
                                           std::size_t, const RelationParams<T>&);

FSB_INSTANTIATE_METRIC(float)
FSB_INSTANTIATE_METRIC(double)

}  // namespace fsb
