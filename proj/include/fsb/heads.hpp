#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsb/tensor.hpp"

namespace fsb {

template <class T>
struct LinearHead {
  Tensor<T> W;  // [d x c]
  Tensor<T> b;  // [c]

  static LinearHead init(std::size_t d, std::size_t c, std::uint64_t seed);
  std::size_t classes() const { return b.numel(); }
  std::vector<Tensor<T>> parameters() const { return {W, b}; }
};

inline constexpr double kDefaultCosineScale = 10.0;

template <class T>
struct CosineHead {
  Tensor<T> W;      // [c x d], one weight vector per class
  Tensor<T> scale;  // [c]

  static CosineHead init(std::size_t d, std::size_t c, double scale0, std::uint64_t seed);
  std::size_t classes() const { return scale.numel(); }
  std::vector<Tensor<T>> parameters() const { return {W, scale}; }
};

template <class T>
Tensor<T> linear_logits(const Tensor<T>& features, const Tensor<T>& W, const Tensor<T>& b);
template <class T>
Tensor<T> linear_logits(const Tensor<T>& features, const LinearHead<T>& head);

/// scale[j] * cos(f_i, w_j)
template <class T>
Tensor<T> cosine_scores(const Tensor<T>& features, const Tensor<T>& W, const Tensor<T>& scale);
template <class T>
Tensor<T> cosine_scores(const Tensor<T>& features, const CosineHead<T>& head);

template <class T>
struct SupportBank {
  Tensor<T> features;  // [m x d]
  std::vector<int> labels;
};

/// Cosine similarities closer than this count as a tie. The norm guard makes
/// parallel vectors of different length differ by about 1e-8.
inline constexpr double kNearestTieTolerance = 1e-6;

/// Label of the most cosine-similar bank entry; ties go to the lowest index.
template <class T>
int nn_predict(std::span<const T> query, const SupportBank<T>& bank);
template <class T>
std::vector<int> nn_predict(const Tensor<T>& queries, const SupportBank<T>& bank);

}  // namespace fsb
