#include "fsb/heads.hpp"

#include <algorithm>
#include <cmath>

#include "fsb/errors.hpp"
#include "fsb/ops.hpp"
#include "fsb/rng.hpp"

namespace fsb {

namespace {

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

}  // namespace

template <class T>
LinearHead<T> LinearHead<T>::init(std::size_t d, std::size_t c, std::uint64_t seed) {
  if (c < 2) throw ConfigError("linear head needs at least 2 classes");
  Rng rng(seed);
  return {uniform_tensor<T>({d, c}, 1.0 / std::sqrt(static_cast<double>(d)), rng), Tensor<T>::zeros({c}, true)};
}

template <class T>
CosineHead<T> CosineHead<T>::init(std::size_t d, std::size_t c, double scale0, std::uint64_t seed) {
  if (c < 2) throw ConfigError("cosine head needs at least 2 classes");
  if (!(scale0 > 0)) throw ConfigError("method.scale_init: must be positive");
  Rng rng(seed);
  return {uniform_tensor<T>({c, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng),
          Tensor<T>::full({c}, static_cast<T>(scale0), true)};
}

template <class T>
Tensor<T> linear_logits(const Tensor<T>& features, const Tensor<T>& W, const Tensor<T>& b) {
  return add_row(matmul(features, W), b);
}

template <class T>
Tensor<T> linear_logits(const Tensor<T>& features, const LinearHead<T>& head) {
  return linear_logits(features, head.W, head.b);
}

template <class T>
Tensor<T> cosine_scores(const Tensor<T>& features, const Tensor<T>& W, const Tensor<T>& scale) {
  return mul_row(cosine_similarity_matrix(features, W), scale);
}

template <class T>
Tensor<T> cosine_scores(const Tensor<T>& features, const CosineHead<T>& head) {
  return cosine_scores(features, head.W, head.scale);
}

template <class T>
std::vector<int> nn_predict(const Tensor<T>& queries, const SupportBank<T>& bank) {
  if (bank.labels.empty() || bank.labels.size() != bank.features.dim(0)) {
    throw ContractError("nn_predict: bank must hold one label per feature and be non-empty");
  }
  NoGradGuard off;
  const auto sims = cosine_similarity_matrix(queries, bank.features);
  const std::size_t n = sims.dim(0), m = sims.dim(1);
  auto s = sims.data();
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = s.data() + i * m;
    const T best = *std::max_element(row, row + m);
    std::size_t j = 0;
    while (row[j] < best - static_cast<T>(kNearestTieTolerance)) ++j;
    out.push_back(bank.labels[j]);
  }
  return out;
}

template <class T>
int nn_predict(std::span<const T> query, const SupportBank<T>& bank) {
  Tensor<T> q({1, query.size()}, std::vector<T>(query.begin(), query.end()));
  return nn_predict(q, bank).front();
}

#define FSB_INSTANTIATE_HEADS(T)                                                             \
  template struct LinearHead<T>;                                                             \
  template struct CosineHead<T>;                                                             \
  template Tensor<T> linear_logits(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> linear_logits(const Tensor<T>&, const LinearHead<T>&);                 \
  template Tensor<T> cosine_scores(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> cosine_scores(const Tensor<T>&, const CosineHead<T>&);                 \
  template std::vector<int> nn_predict(const Tensor<T>&, const SupportBank<T>&);             \
  template int nn_predict(std::span<const T>, const SupportBank<T>&);

FSB_INSTANTIATE_HEADS(float)
FSB_INSTANTIATE_HEADS(double)

}  // namespace fsb
